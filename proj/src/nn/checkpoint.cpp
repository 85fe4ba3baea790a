#include "msihist/nn/checkpoint.hpp"
#include "msihist/error.hpp"

#include "../binio.hpp"

#include <fstream>
#include <sstream>

namespace msihist::nn {

namespace {
constexpr char kMagic[4] = {'M', 'S', 'I', 'H'};
} // namespace

void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &path) {
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, 4);
    binio::put<std::uint32_t>(os, kCheckpointVersion);
    binio::put_string(os, ck.config);
    binio::put<std::uint64_t>(os, ck.step);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.params.size()));
    for (const auto &p : ck.params) {
        const std::size_t n = numel(p.shape);
        if (p.data.size() != n || p.m.size() != n || p.v.size() != n)
            throw InvalidInput("checkpoint record '" + p.name + "' has inconsistent sizes");
        binio::put_string(os, p.name);
        binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.shape.size()));
        for (std::size_t d : p.shape) binio::put<std::uint64_t>(os, d);
        binio::put_array(os, p.data.data(), n);
        binio::put_array(os, p.m.data(), n);
        binio::put_array(os, p.v.data(), n);
    }
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.meta.size()));
    for (const auto &[k, v] : ck.meta) {
        binio::put_string(os, k);
        binio::put<double>(os, v);
    }

    // Write to a temporary and rename so readers never see a partial file.
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        const std::string bytes = os.str();
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw RuntimeFailure("cannot write checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("cannot open checkpoint " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
        throw InvalidInput(path.string() + " is not a checkpoint (bad magic)");
    const auto version = binio::get<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw InvalidInput("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config = binio::get_string(is);
    ck.step = binio::get<std::uint64_t>(is);
    const auto n_params = binio::get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        ParamRecord p;
        p.name = binio::get_string(is, 4096);
        const auto nd = binio::get<std::uint32_t>(is);
        if (nd > 8) throw InvalidInput("checkpoint record '" + p.name + "' has too many dimensions");
        for (std::uint32_t d = 0; d < nd; ++d) p.shape.push_back(binio::get<std::uint64_t>(is));
        const std::size_t n = numel(p.shape);
        if (n > (std::size_t{1} << 32)) throw InvalidInput("checkpoint record '" + p.name + "' is too large");
        p.data.resize(n);
        p.m.resize(n);
        p.v.resize(n);
        binio::get_array(is, p.data.data(), n);
        binio::get_array(is, p.m.data(), n);
        binio::get_array(is, p.v.data(), n);
        ck.params.push_back(std::move(p));
    }
    const auto n_meta = binio::get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = binio::get_string(is, 4096);
        ck.meta[k] = binio::get<double>(is);
    }
    if (is.peek() != std::char_traits<char>::eof())
        throw InvalidInput("trailing bytes after checkpoint payload in " + path.string());
    return ck;
}

void capture(const Adam &opt, const std::string &prefix, Checkpoint &ck) {
    const auto &params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto &t = params[i].tensor;
        ck.params.push_back({prefix + params[i].name, t.shape(), t.values(), opt.first_moment(i),
                             opt.second_moment(i)});
    }
}

namespace {

const ParamRecord &find_record(const Checkpoint &ck, const std::string &name, const Shape &shape) {
    for (const auto &p : ck.params)
        if (p.name == name) {
            if (p.shape != shape)
                throw InvalidInput("checkpoint record '" + name + "' has shape " + shape_str(p.shape) +
                                   ", model expects " + shape_str(shape));
            return p;
        }
    throw InvalidInput("checkpoint has no record '" + name + "' (config mismatch?)");
}

} // namespace

void restore(const Checkpoint &ck, const std::string &prefix, Adam &opt) {
    const auto &params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        const auto &rec = find_record(ck, prefix + params[i].name, t.shape());
        std::copy(rec.data.begin(), rec.data.end(), t.data().begin());
        opt.first_moment(i) = rec.m;
        opt.second_moment(i) = rec.v;
    }
}

void restore_values(const Checkpoint &ck, const std::string &prefix, const std::vector<NamedTensor> &params) {
    for (const auto &p : params) {
        Tensor t = p.tensor;
        const auto &rec = find_record(ck, prefix + p.name, t.shape());
        std::copy(rec.data.begin(), rec.data.end(), t.data().begin());
    }
}

} // namespace msihist::nn
