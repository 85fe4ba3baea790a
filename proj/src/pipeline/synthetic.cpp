#include "msihist/pipeline/synthetic.hpp"

#include "msihist/error.hpp"
#include "msihist/image_io.hpp"
#include "msihist/pipeline/dataset.hpp"
#include "msihist/spectra.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace msihist::pipeline {

namespace fs = std::filesystem;
using imagereg::AffineTransform;

namespace {

constexpr int kTypes = 4;
constexpr double kPeakSigma = 1.6;  // m/z
constexpr double kMzLo = 420.0, kMzHi = 900.0;
constexpr int kBins = 260;

using Rgb = std::array<double, 3>;

// stroma, epithelium, adipose, tumour
constexpr std::array<Rgb, kTypes> kTypeColor{{{0.92, 0.60, 0.76}, {0.62, 0.42, 0.72}, {0.97, 0.90, 0.94}, {0.45, 0.30, 0.62}}};
constexpr std::array<double, kTypes> kNucleusDensity{0.25, 0.75, 0.05, 0.95};
constexpr Rgb kBackground{0.97, 0.96, 0.98};
constexpr Rgb kNucleus{0.28, 0.16, 0.42};

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, 0x5eedu};
    return std::mt19937_64(seq);
}

double uniform(std::mt19937_64 &rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::string real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Globals {
    std::vector<double> mz;                                  // planted loci
    std::array<std::vector<double>, kTypes> amplitude;       // per type, per locus
    std::vector<double> background;                          // off-tissue amplitudes
};

Globals make_globals(std::uint64_t seed) {
    auto rng = make_rng(seed, 0xffffffffu);
    Globals g;
    const double spacing = (kMzHi - kMzLo) / (kPlantedPeaks - 1);
    for (int p = 0; p < kPlantedPeaks; ++p) g.mz.push_back(kMzLo + p * spacing + uniform(rng, -1.0, 1.0));
    for (auto &a : g.amplitude)
        for (int p = 0; p < kPlantedPeaks; ++p) a.push_back(uniform(rng, 0.15, 1.0));
    for (int p = 0; p < kPlantedPeaks; ++p) g.background.push_back(p % 9 == 0 ? 0.04 : 0.0);
    return g;
}

// Smooth tissue layout in unit coordinates u in [0, 1]^2.
struct Layout {
    struct Blob {
        double cx, cy, sigma;
    };
    struct Wave {
        double amp, fx, fy, phase;
    };
    std::vector<Blob> blobs;
    std::array<std::array<Wave, 3>, kTypes> waves;
    struct Nucleus {
        double x, y, r;
    };
    int ncell = 48;
    std::vector<std::vector<Nucleus>> cells;  // nuclei bucketed on an ncell x ncell grid

    double alpha(double x, double y) const {
        double f = 0.0;
        for (const auto &b : blobs) f += std::exp(-((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (2 * b.sigma * b.sigma));
        return 1.0 / (1.0 + std::exp(-12.0 * (f - 0.5)));
    }

    std::array<double, kTypes> weights(double x, double y) const {
        std::array<double, kTypes> s{};
        double mx = -1e300;
        for (int r = 0; r < kTypes; ++r) {
            for (const auto &w : waves[r])
                s[r] += w.amp * std::cos(2 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
            s[r] *= 6.0;
            mx = std::max(mx, s[r]);
        }
        double total = 0.0;
        for (double &v : s) total += (v = std::exp(v - mx));
        for (double &v : s) v /= total;
        return s;
    }

    // Nucleus coverage in [0, 1] at u.
    double nucleus(double x, double y) const {
        const int cx = static_cast<int>(std::floor(x * ncell)), cy = static_cast<int>(std::floor(y * ncell));
        double cover = 0.0;
        for (int j = cy - 1; j <= cy + 1; ++j)
            for (int i = cx - 1; i <= cx + 1; ++i) {
                if (i < 0 || j < 0 || i >= ncell || j >= ncell) continue;
                for (const auto &n : cells[static_cast<std::size_t>(j) * ncell + i]) {
                    const double d = std::hypot(x - n.x, y - n.y) / n.r;
                    cover = std::max(cover, std::clamp(1.5 - d, 0.0, 1.0));
                }
            }
        return cover;
    }
};

Layout make_layout(std::mt19937_64 &rng) {
    Layout L;
    const int nb = 3 + static_cast<int>(rng() % 3);
    for (int i = 0; i < nb; ++i)
        L.blobs.push_back({uniform(rng, 0.28, 0.72), uniform(rng, 0.28, 0.72), uniform(rng, 0.10, 0.18)});
    for (auto &type : L.waves)
        for (auto &w : type) w = {uniform(rng, 0.3, 1.0), uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, 0, 2 * std::numbers::pi)};
    L.cells.resize(static_cast<std::size_t>(L.ncell) * L.ncell);
    for (int j = 0; j < L.ncell; ++j)
        for (int i = 0; i < L.ncell; ++i) {
            const double x = (i + uniform(rng, 0.15, 0.85)) / L.ncell, y = (j + uniform(rng, 0.15, 0.85)) / L.ncell;
            const double r = uniform(rng, 0.006, 0.010);
            const double keep = uniform(rng, 0.0, 1.0);
            const auto w = L.weights(x, y);
            double density = 0.0;
            for (int t = 0; t < kTypes; ++t) density += w[t] * kNucleusDensity[t];
            if (keep < density * L.alpha(x, y)) L.cells[static_cast<std::size_t>(j) * L.ncell + i].push_back({x, y, r});
        }
    return L;
}

spectra::MSIDataset render_msi(const Layout &L, const Globals &g, int S, std::mt19937_64 &rng) {
    const double step = 2.0 * (1.0 + uniform(rng, -0.01, 0.01));
    const double start = 400.0 + uniform(rng, 0.0, step);
    std::vector<double> axis(kBins);
    for (int j = 0; j < kBins; ++j) axis[j] = start + j * step;

    // Sparse peak profiles on this axis.
    struct Tap {
        int bin;
        double weight;
    };
    std::vector<std::vector<Tap>> profile(kPlantedPeaks);
    for (int p = 0; p < kPlantedPeaks; ++p)
        for (int j = 0; j < kBins; ++j) {
            const double d = (axis[j] - g.mz[p]) / kPeakSigma;
            if (std::abs(d) <= 5.0) profile[p].push_back({j, std::exp(-0.5 * d * d)});
        }

    spectra::MSIDataset ds;
    ds.width = ds.height = S;
    ds.axis = spectra::MzAxis(axis);
    ds.intensities.assign(static_cast<std::size_t>(S) * S * kBins, 0.0f);
    ds.mask.assign(static_cast<std::size_t>(S) * S, 1);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> row(kBins);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const double ux = (x + 0.5) / S, uy = (y + 0.5) / S;
            const double a = L.alpha(ux, uy);
            const auto w = L.weights(ux, uy);
            std::fill(row.begin(), row.end(), 0.0);
            for (int p = 0; p < kPlantedPeaks; ++p) {
                double amp = (1.0 - a) * g.background[p];
                for (int t = 0; t < kTypes; ++t) amp += a * w[t] * g.amplitude[t][p];
                for (const auto &tap : profile[p]) row[tap.bin] += amp * tap.weight;
            }
            auto out = ds.spectrum(ds.pixel_index(x, y));
            for (int j = 0; j < kBins; ++j) {
                const double v = row[j] * (1.0 + 0.05 * nd(rng)) + 0.01 * std::abs(nd(rng));
                out[j] = static_cast<float>(std::max(0.0, v));
            }
        }
    return ds;
}

Image render_histology(const Layout &L, const AffineTransform &hist_to_msi, int S, int W, int H,
                       std::mt19937_64 &rng) {
    Image img(W, H, 3);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int Y = 0; Y < H; ++Y)
        for (int X = 0; X < W; ++X) {
            const auto q = hist_to_msi.apply(X, Y);
            const double ux = (q[0] + 0.5) / S, uy = (q[1] + 0.5) / S;
            const double a = L.alpha(ux, uy);
            const auto w = L.weights(ux, uy);
            const double n = L.nucleus(ux, uy);
            for (int c = 0; c < 3; ++c) {
                double tissue = 0.0;
                for (int t = 0; t < kTypes; ++t) tissue += w[t] * kTypeColor[t][c];
                tissue = (1.0 - n) * tissue + n * kNucleus[c];
                const double v = (1.0 - a) * kBackground[c] + a * tissue + 0.015 * nd(rng);
                img.at(c, Y, X) = std::clamp(v, 0.0, 1.0);
            }
        }
    return img;
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) throw RuntimeFailure("cannot write " + path.string());
}

} // namespace

std::string sample_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%03d", index);
    return buf;
}

SyntheticTruth generate_synthetic_dataset(const fs::path &dir, const SyntheticOptions &opt) {
    require(opt.n_samples >= 1, "generate: n_samples must be >= 1");
    require(opt.image_size >= 8, "generate: image_size must be >= 8");
    const int S = opt.image_size;
    fs::create_directories(dir);

    const Globals g = make_globals(opt.seed);
    SyntheticTruth truth;
    truth.planted_mz = g.mz;
    {
        std::string text = "mz\n";
        for (double m : g.mz) text += real(m) + "\n";
        write_text(dir / "planted_peaks.csv", text);
    }

    DatasetManifest manifest;
    for (int i = 0; i < opt.n_samples; ++i) {
        const std::string id = sample_id(i);
        auto rng = make_rng(opt.seed, static_cast<std::uint32_t>(i));
        const Layout L = make_layout(rng);

        // Non-square histology canvas, alternately landscape and portrait.
        const int longer = 2 * S;
        const int shorter = longer - 2 * static_cast<int>(std::lround(uniform(rng, S / 8.0, S / 4.0)));
        const int W = i % 2 ? longer : shorter, H = i % 2 ? shorter : longer;

        const double scale = static_cast<double>(S) / longer * (1.0 + uniform(rng, -0.05, 0.05));
        const double theta = uniform(rng, -8.0, 8.0) * std::numbers::pi / 180.0;
        const double hx = (W - 1) / 2.0, hy = (H - 1) / 2.0, m = (S - 1) / 2.0;
        AffineTransform t;
        t.a = scale * std::cos(theta);
        t.b = -scale * std::sin(theta);
        t.c = scale * std::sin(theta);
        t.d = scale * std::cos(theta);
        t.tx = m + uniform(rng, -2.0, 2.0) - (t.a * hx + t.b * hy);
        t.ty = m + uniform(rng, -2.0, 2.0) - (t.c * hx + t.d * hy);
        truth.transforms.push_back(t);

        const fs::path sdir = dir / id;
        fs::create_directories(sdir);
        spectra::save_msi(render_msi(L, g, S, rng), sdir / "msi");
        write_png(sdir / "histology.png", render_histology(L, t, S, W, H, rng));

        imagereg::ControlPoints cp;
        for (int k = 0; k < 6; ++k) {
            const double sx = uniform(rng, 0.1, 0.9) * (W - 1), sy = uniform(rng, 0.1, 0.9) * (H - 1);
            const auto d = t.apply(sx, sy);
            cp.pairs.push_back({sx, sy, d[0], d[1]});
        }
        imagereg::write_control_points(cp, sdir / "control_points.csv");

        nlohmann::ordered_json j;
        j["id"] = id;
        j["histology_to_msi"] = {t.a, t.b, t.tx, t.c, t.d, t.ty};
        j["histology_size"] = {W, H};
        j["msi_size"] = {S, S};
        write_text(sdir / "truth.json", j.dump(2) + "\n");

        manifest.samples.push_back({id, sdir / "msi", sdir / "histology.png", sdir / "control_points.csv"});
    }
    write_manifest(manifest, dir / "manifest.csv");
    return truth;
}

} // namespace msihist::pipeline
