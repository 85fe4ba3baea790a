#include "msihist/error.hpp"
#include "msihist/reduce.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace msihist;
using namespace msihist::reduce;
using msihist::spectra::PeakImageStack;

namespace {

PeakImageStack make_stack(int w, int h, int k, const std::vector<double> &data) {
    PeakImageStack st;
    st.width = w;
    st.height = h;
    st.channels = k;
    st.data = data;
    st.peak_mzs.assign(k, 0.0);
    for (int i = 0; i < k; ++i) st.peak_mzs[i] = 100.0 + i;
    st.mask.assign(static_cast<std::size_t>(w) * h, 1);
    return st;
}

PeakImageStack random_stack(std::mt19937_64 &rng, int w, int h, int k) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> d(static_cast<std::size_t>(w) * h * k);
    for (double &v : d) v = nd(rng);
    return make_stack(w, h, k, d);
}

double mean_of(const std::vector<double> &v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// Power iteration with deflation: an independent route to the leading eigenpairs.
std::vector<std::vector<double>> power_eigvecs(const std::vector<std::vector<double>> &cov, int count) {
    const std::size_t K = cov.size();
    std::vector<std::vector<double>> A = cov, out;
    for (int r = 0; r < count; ++r) {
        std::vector<double> v(K, 1.0);
        for (std::size_t i = 0; i < K; ++i) v[i] += 0.01 * i;
        double lambda = 0.0;
        for (int it = 0; it < 5000; ++it) {
            std::vector<double> w(K, 0.0);
            for (std::size_t i = 0; i < K; ++i)
                for (std::size_t j = 0; j < K; ++j) w[i] += A[i][j] * v[j];
            double n = 0.0;
            for (double x : w) n += x * x;
            n = std::sqrt(n);
            for (std::size_t i = 0; i < K; ++i) v[i] = w[i] / n;
            lambda = n;
        }
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = 0; j < K; ++j) A[i][j] -= lambda * v[i] * v[j];
        out.push_back(v);
    }
    return out;
}

} // namespace

TEST_CASE("percentile uses linear interpolation between order statistics") {
    CHECK(percentile({3, 1, 2, 4}, 0) == 1.0);
    CHECK(percentile({3, 1, 2, 4}, 100) == 4.0);
    CHECK(percentile({3, 1, 2, 4}, 50) == doctest::Approx(2.5));
    CHECK(percentile({0, 10}, 1) == doctest::Approx(0.1));
}

TEST_CASE("pca_rgb: two pixels along the diagonal") {
    const auto st = make_stack(2, 1, 3, {0, 1, 0, 1, 0, 1});
    PcaModel model;
    const Image rgb = pca_rgb(st, {}, &model);
    const double s = 1.0 / std::sqrt(3.0);
    for (double c : model.components[0]) CHECK(c == doctest::Approx(s));
    CHECK(rgb.at(0, 0, 0) == 0.0);
    CHECK(rgb.at(0, 0, 1) == 1.0);
    for (int c = 1; c < 3; ++c) {
        CHECK(rgb.at(c, 0, 0) == 0.5);
        CHECK(rgb.at(c, 0, 1) == 0.5);
    }
}

TEST_CASE("pca_rgb: rank-1 stack puts all variation in R") {
    // Channels are 1x, 2x, 3x the same base image.
    std::vector<double> base{0.1, 0.7, 0.3, 0.9, 0.2, 0.5};
    std::vector<double> d;
    for (double k : {1.0, 2.0, 3.0})
        for (double b : base) d.push_back(k * b);
    PcaModel model;
    const Image rgb = pca_rgb(make_stack(3, 2, 3, d), {}, &model);
    const double n = std::sqrt(14.0);
    CHECK(model.components[0][0] == doctest::Approx(1.0 / n));
    CHECK(model.components[0][2] == doctest::Approx(3.0 / n));
    CHECK(model.eigenvalues[1] == 0.0);
    for (std::size_t p = 0; p < 6; ++p) {
        CHECK(rgb.data[6 + p] == 0.5);
        CHECK(rgb.data[12 + p] == 0.5);
    }
    const double lo = *std::min_element(rgb.data.begin(), rgb.data.begin() + 6);
    const double hi = *std::max_element(rgb.data.begin(), rgb.data.begin() + 6);
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
    // R is monotone in the base image.
    CHECK(rgb.data[3] == 1.0);
    CHECK(rgb.data[0] == 0.0);
}

TEST_CASE("pca_rgb: degenerate inputs") {
    CHECK_THROWS_AS(pca_rgb(make_stack(2, 2, 3, std::vector<double>(12, 4.0))), InvalidInput);
    CHECK_THROWS_AS(pca_rgb(make_stack(2, 1, 2, {0, 1, 1, 0})), InvalidInput);
}

TEST_CASE("pca_rgb: masked-off pixels are black and excluded") {
    std::mt19937_64 rng(3);
    auto st = random_stack(rng, 5, 4, 6);
    auto st2 = st;
    st.mask[7] = 0;
    st2.mask[7] = 0;
    for (int c = 0; c < 6; ++c) st2.data[c * 20 + 7] = 1e6;  // garbage under the mask
    const Image a = pca_rgb(st), b = pca_rgb(st2);
    CHECK(a.data == b.data);
    for (int c = 0; c < 3; ++c) CHECK(a.data[c * 20 + 7] == 0.0);
}

TEST_CASE("pca_rgb: components match power iteration and scores are decorrelated") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const int K = 3 + trial % 5;
        // Correlated data: mix random sources with random loadings.
        std::normal_distribution<double> nd(0.0, 1.0);
        const int w = 9, h = 7, np = w * h;
        std::vector<double> d(static_cast<std::size_t>(np) * K, 0.0);
        for (int src = 0; src < K; ++src) {
            std::vector<double> load(K);
            for (double &l : load) l = nd(rng) * (K - src);
            for (int p = 0; p < np; ++p) {
                const double z = nd(rng);
                for (int k = 0; k < K; ++k) d[k * np + p] += load[k] * z;
            }
        }
        const auto st = make_stack(w, h, K, d);
        const PcaModel model = fit_pca(st);

        std::vector<double> mean(K, 0.0);
        for (int k = 0; k < K; ++k)
            for (int p = 0; p < np; ++p) mean[k] += d[k * np + p] / np;
        std::vector<std::vector<double>> cov(K, std::vector<double>(K, 0.0));
        for (int a = 0; a < K; ++a)
            for (int b = 0; b < K; ++b)
                for (int p = 0; p < np; ++p)
                    cov[a][b] += (d[a * np + p] - mean[a]) * (d[b * np + p] - mean[b]) / (np - 1);
        const auto ref = power_eigvecs(cov, 3);
        for (int r = 0; r < 3; ++r) {
            double dot = 0.0;
            for (int k = 0; k < K; ++k) dot += ref[r][k] * model.components[r][k];
            CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-6));
        }

        const auto scores = pca_scores(st, model);
        std::vector<std::vector<double>> sc(3, std::vector<double>(np));
        for (int r = 0; r < 3; ++r)
            for (int p = 0; p < np; ++p) sc[r][p] = scores[r * np + p];
        auto var = [&](const std::vector<double> &v) {
            const double m = mean_of(v);
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            return s;
        };
        CHECK(var(sc[0]) >= var(sc[1]));
        CHECK(var(sc[1]) >= var(sc[2]));
        for (int r = 0; r < 3; ++r)
            for (int q = r + 1; q < 3; ++q) {
                double c = 0.0;
                for (int p = 0; p < np; ++p) c += (sc[r][p] - mean_of(sc[r])) * (sc[q][p] - mean_of(sc[q]));
                CHECK(std::abs(c / std::sqrt(var(sc[r]) * var(sc[q]))) < 1e-6);
            }
    }
}

TEST_CASE("pca_rgb: K=3 back-projection reproduces centered data") {
    std::mt19937_64 rng(21);
    const auto st = random_stack(rng, 6, 5, 3);
    const auto model = fit_pca(st);
    const auto scores = pca_scores(st, model);
    const std::size_t np = st.plane_size();
    for (std::size_t p = 0; p < np; ++p)
        for (int k = 0; k < 3; ++k) {
            double rec = 0.0;
            for (int r = 0; r < 3; ++r) rec += scores[r * np + p] * model.components[r][k];
            const double centered = st.at(k, p) - model.mean[k];
            CHECK(rec == doctest::Approx(centered).epsilon(1e-6).scale(1.0));
        }
}

TEST_CASE("pca_rgb: pixel permutation commutes bit-exactly") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const int w = 8, h = 6, K = 7, np = w * h;
        auto st = random_stack(rng, w, h, K);
        st.mask[rng() % np] = 0;
        std::vector<int> perm(np);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto permuted = st;
        for (int p = 0; p < np; ++p) {
            permuted.mask[p] = st.mask[perm[p]];
            for (int k = 0; k < K; ++k) permuted.data[k * np + p] = st.data[k * np + perm[p]];
        }
        const Image a = pca_rgb(st), b = pca_rgb(permuted);
        for (int c = 0; c < 3; ++c)
            for (int p = 0; p < np; ++p) CHECK(b.data[c * np + p] == a.data[c * np + perm[p]]);
    }
}
