#include "msihist/metrics.hpp"
#include "msihist/error.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace msihist::metrics {

namespace {

std::vector<int> bin_indices(const Image &lum, int bins) {
    std::vector<int> idx(lum.data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double v = std::clamp(lum.data[i], 0.0, 1.0);
        idx[i] = std::min(static_cast<int>(v * bins), bins - 1);
    }
    return idx;
}

void check_pair(const Image &a, const Image &b, const char *what) {
    require(a.width == b.width && a.height == b.height,
            std::string(what) + ": dimension mismatch (" + std::to_string(a.width) + "x" +
                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
    require(!a.empty(), std::string(what) + ": empty image");
}

} // namespace

double entropy(const Image &a, int bins) {
    require(bins >= 2, "entropy: bins must be >= 2");
    const auto idx = bin_indices(luminance(a), bins);
    std::vector<long long> h(bins, 0);
    for (int i : idx) ++h[i];
    const double n = static_cast<double>(idx.size());
    double H = 0.0;
    for (long long c : h)
        if (c) {
            const double p = c / n;
            H -= p * std::log(p);
        }
    return H;
}

double mutual_information(const Image &a, const Image &b, int bins) {
    check_pair(a, b, "mutual_information");
    require(bins >= 2, "mutual_information: bins must be >= 2");
    const auto ia = bin_indices(luminance(a), bins);
    const auto ib = bin_indices(luminance(b), bins);

    const auto B = static_cast<std::size_t>(bins);
    std::vector<long long> joint(B * B, 0), ha(B, 0), hb(B, 0);
    for (std::size_t i = 0; i < ia.size(); ++i) {
        ++joint[ia[i] * B + ib[i]];
        ++ha[ia[i]];
        ++hb[ib[i]];
    }
    const double n = static_cast<double>(ia.size());
    auto term = [&](std::size_t i, std::size_t j) {
        const long long c = joint[i * B + j];
        if (!c) return 0.0;
        const double p = c / n;
        return p * std::log(p / ((ha[i] / n) * (hb[j] / n)));
    };
    // Cells (i,j) and (j,i) are visited together so that swapping the two
    // images only swaps the operands of each addition: MI is bit-symmetric.
    double mi = 0.0;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = i; j < B; ++j) mi += (i == j) ? term(i, i) : term(i, j) + term(j, i);
    return std::max(0.0, mi);
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(size);
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    const double s = std::accumulate(k.begin(), k.end(), 0.0);
    for (double &v : k) v /= s;
    return k;
}

// Symmetric reflection (d c b a | a b c d | d c b a).
int reflect(int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
}

std::vector<double> filter(const std::vector<double> &img, int w, int h, const std::vector<double> &k) {
    const int r = static_cast<int>(k.size()) / 2;
    std::vector<double> tmp(img.size()), out(img.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = -r; t <= r; ++t) s += k[t + r] * img[static_cast<std::size_t>(y) * w + reflect(x + t, w)];
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = -r; t <= r; ++t) s += k[t + r] * tmp[static_cast<std::size_t>(reflect(y + t, h)) * w + x];
            out[static_cast<std::size_t>(y) * w + x] = s;
        }
    return out;
}

} // namespace

double ssim(const Image &a, const Image &b, const SsimParams &p) {
    check_pair(a, b, "ssim");
    require(p.window >= 1 && p.window % 2 == 1, "ssim: window must be odd");
    require(a.width >= p.window && a.height >= p.window,
            "ssim: image smaller than the " + std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
    const Image la = luminance(a), lb = luminance(b);
    const int w = la.width, h = la.height;
    const auto k = gaussian_kernel(p.window, p.sigma);
    const double C1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double C2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

    const std::size_t n = la.data.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = la.data[i] * la.data[i];
        bb[i] = lb.data[i] * lb.data[i];
        ab[i] = la.data[i] * lb.data[i];
    }
    const auto mu_a = filter(la.data, w, h, k), mu_b = filter(lb.data, w, h, k);
    const auto e_aa = filter(aa, w, h, k), e_bb = filter(bb, w, h, k), e_ab = filter(ab, w, h, k);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
        const double num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
        const double den = (ma * ma + mb * mb + C1) * (va + vb + C2);
        total += num / den;
    }
    return total / static_cast<double>(n);
}

MetricReport evaluate_set(const std::vector<EvalPair> &pairs, int bins) {
    require(!pairs.empty(), "evaluate_set: no image pairs to evaluate");
    MetricReport r;
    for (const auto &p : pairs) {
        ImageScore s{p.id, mutual_information(p.real, p.synthesized, bins), ssim(p.real, p.synthesized)};
        r.mi += s.mi;
        r.ssim += s.ssim;
        r.per_image.push_back(std::move(s));
    }
    r.n_images = pairs.size();
    r.mi /= static_cast<double>(r.n_images);
    r.ssim /= static_cast<double>(r.n_images);
    return r;
}

void write_report_csv(const MetricReport &r, const std::filesystem::path &path, const std::string &label) {
    std::ofstream os(path);
    os << "# " << (label.empty() ? std::string("evaluation") : label)
       << ": image-level metrics; mean_mi and mean_ssim are arithmetic means over " << r.n_images
       << " whole images (not patches)\n";
    os << "id,mi,ssim\n";
    os.precision(17);
    for (const auto &s : r.per_image) os << s.id << ',' << s.mi << ',' << s.ssim << '\n';
    if (!os) throw RuntimeFailure("cannot write " + path.string());
}

MetricReport read_report_csv(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open " + path.string());
    std::string line;
    bool header = false;
    MetricReport r;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (csv::blank(line) || line.front() == '#') continue;
        if (!header) {
            if (csv::trim(line) != "id,mi,ssim") throw InvalidInput("report CSV must have header 'id,mi,ssim'");
            header = true;
            continue;
        }
        const auto f = csv::split(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 3) throw InvalidInput("expected 3 fields at " + where);
        r.per_image.push_back({std::string(f[0]), csv::to_double(f[1], where), csv::to_double(f[2], where)});
    }
    require(!r.per_image.empty(), "report CSV " + path.string() + " has no rows");
    for (const auto &s : r.per_image) {
        r.mi += s.mi;
        r.ssim += s.ssim;
    }
    r.n_images = r.per_image.size();
    r.mi /= static_cast<double>(r.n_images);
    r.ssim /= static_cast<double>(r.n_images);
    return r;
}

} // namespace msihist::metrics
