#pragma once

// Minimal helpers for the small comma-separated formats this project reads.

#include "msihist/error.hpp"

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

namespace msihist::csv {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

inline double to_double(std::string_view s, const std::string &where) {
    s = trim(s);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw InvalidInput("cannot parse number '" + std::string(s) + "' at " + where);
    return v;
}

inline bool blank(std::string_view s) { return trim(s).empty(); }

} // namespace msihist::csv
