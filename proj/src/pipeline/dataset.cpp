#include "msihist/pipeline/dataset.hpp"

#include "msihist/error.hpp"
#include "msihist/pipeline/log.hpp"

#include "../csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace msihist::pipeline {

std::string to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

std::vector<std::size_t> DatasetManifest::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(i);
    return out;
}

DatasetManifest read_manifest(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    std::string line;
    std::getline(is, line);
    if (csv::trim(line) != "id,msi,histology,control_points")
        throw InvalidInput(path.string() + ": header must be 'id,msi,histology,control_points'");
    DatasetManifest m;
    std::set<std::string> seen;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (csv::blank(line)) continue;
        const auto f = csv::split(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 4) throw InvalidInput(where + ": expected 4 fields");
        SampleEntry e{std::string(f[0]), std::string(f[1]), std::string(f[2]), std::string(f[3])};
        if (e.id.empty()) throw InvalidInput(where + ": empty id");
        if (!seen.insert(e.id).second) throw InvalidInput(where + ": duplicate id '" + e.id + "'");
        for (auto *p : {&e.msi, &e.histology, &e.control_points})
            if (p->is_relative()) *p = base / *p;
        m.samples.push_back(std::move(e));
    }
    if (m.samples.empty()) throw InvalidInput(path.string() + ": no samples");
    return m;
}

void write_manifest(const DatasetManifest &m, const std::filesystem::path &path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RuntimeFailure("cannot write " + path.string());
    const auto base = path.parent_path();
    auto rel = [&](const std::filesystem::path &p) { return p.lexically_relative(base).generic_string(); };
    os << "id,msi,histology,control_points\n";
    for (const auto &e : m.samples)
        os << e.id << ',' << rel(e.msi) << ',' << rel(e.histology) << ',' << rel(e.control_points) << '\n';
    if (!os) throw RuntimeFailure("error writing " + path.string());
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3> &f) {
    for (double v : f) require(v >= 0.0 && v <= 1.0, "split fractions must be in [0, 1]");
    require(std::abs(f[0] + f[1] + f[2] - 1.0) <= 1e-9, "split fractions must sum to 1");
    std::array<std::size_t, 3> size{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = f[i] * static_cast<double>(n);
        size[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rem[i] = exact - static_cast<double>(size[i]);
        used += size[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b] + 1e-12; });
    for (int i = 0; used < n; i = (i + 1) % 3, ++used) ++size[order[i]];
    return size;
}

std::vector<Split> split_dataset(const std::vector<std::string> &ids, const std::array<double, 3> &fractions,
                                 std::uint64_t seed) {
    require(!ids.empty(), "split_dataset: empty id list");
    if (ids.size() < 10) log_warn("only " + std::to_string(ids.size()) + " samples; splits will be tiny");
    const auto size = split_sizes(ids.size(), fractions);

    std::vector<std::size_t> perm(ids.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = perm.size(); i > 1; --i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
        std::swap(perm[i - 1], perm[j]);
    }

    std::vector<Split> out(ids.size());
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
        for (std::size_t k = 0; k < size[s]; ++k) out[perm[pos++]] = static_cast<Split>(s);
    return out;
}

} // namespace msihist::pipeline
