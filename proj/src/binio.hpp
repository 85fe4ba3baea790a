#pragma once

// Little-endian scalar serialization shared by the MSI container and the
// checkpoint format.

#include "msihist/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace msihist::binio {

template <class T>
void put(std::ostream &os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    os.write(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <class T>
T get(std::istream &is) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char *>(bytes), sizeof(T)))
        throw InvalidInput("unexpected end of binary stream");
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

template <class T>
void put_array(std::ostream &os, const T *data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char *>(data), static_cast<std::streamsize>(n * sizeof(T)));
    } else {
        for (std::size_t i = 0; i < n; ++i) put<T>(os, data[i]);
    }
}

template <class T>
void get_array(std::istream &is, T *data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char *>(data), static_cast<std::streamsize>(n * sizeof(T))))
            throw InvalidInput("unexpected end of binary stream");
    } else {
        for (std::size_t i = 0; i < n; ++i) data[i] = get<T>(is);
    }
}

inline void put_string(std::ostream &os, const std::string &s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream &is, std::size_t max_len = 1u << 26) {
    const auto n = get<std::uint32_t>(is);
    if (n > max_len) throw InvalidInput("string record too long");
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw InvalidInput("unexpected end of binary stream");
    return s;
}

} // namespace msihist::binio
