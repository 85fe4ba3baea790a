#include "msihist/reduce.hpp"
#include "msihist/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msihist::reduce {

using spectra::PeakImageStack;

namespace {

// Components whose eigenvalue falls below this fraction of the largest one
// carry only rounding noise and are treated as exactly zero.
constexpr double kDegenerateEigen = 1e-12;

std::vector<std::size_t> acquired_pixels(const PeakImageStack &st) {
    std::vector<std::size_t> px;
    for (std::size_t p = 0; p < st.plane_size(); ++p)
        if (st.mask.empty() || st.mask[p]) px.push_back(p);
    return px;
}

} // namespace

double percentile(std::vector<double> values, double pct) {
    require(!values.empty(), "percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double rank = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double f = rank - static_cast<double>(lo);
    return values[lo] + f * (values[hi] - values[lo]);
}

PcaModel fit_pca(const PeakImageStack &st) {
    require(st.channels >= 3, "pca_rgb: need at least 3 channels, got " + std::to_string(st.channels));
    require(st.data.size() == st.plane_size() * st.channels, "pca_rgb: stack data has the wrong size");
    const auto K = static_cast<std::size_t>(st.channels);

    auto px = acquired_pixels(st);
    require(px.size() >= 2, "pca_rgb: need at least 2 acquired pixels");

    // Canonical sample order makes every accumulation independent of pixel layout.
    std::vector<std::vector<double>> samples(px.size(), std::vector<double>(K));
    for (std::size_t i = 0; i < px.size(); ++i)
        for (std::size_t k = 0; k < K; ++k) samples[i][k] = st.at(static_cast<int>(k), px[i]);
    std::sort(samples.begin(), samples.end());

    const auto n = static_cast<double>(samples.size());
    std::vector<double> mean(K, 0.0);
    for (const auto &s : samples)
        for (std::size_t k = 0; k < K; ++k) mean[k] += s[k];
    for (double &m : mean) m /= n;

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(K, K);
    std::vector<double> c(K);
    for (const auto &s : samples) {
        for (std::size_t k = 0; k < K; ++k) c[k] = s[k] - mean[k];
        for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = a; b < K; ++b) cov(a, b) += c[a] * c[b];
    }
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = a; b < K; ++b) {
            cov(a, b) /= (n - 1.0);
            cov(b, a) = cov(a, b);
        }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw RuntimeFailure("pca_rgb: eigendecomposition failed");
    const double top = eig.eigenvalues()(K - 1);
    if (!(top > 0.0) || !std::isfinite(top))
        throw InvalidInput("pca_rgb: degenerate input (stack has zero covariance)");

    PcaModel model;
    model.mean = mean;
    for (std::size_t r = 0; r < 3; ++r) {
        const auto col = static_cast<Eigen::Index>(K - 1 - r);
        double lambda = eig.eigenvalues()(col);
        std::vector<double> v(K);
        for (std::size_t k = 0; k < K; ++k) v[k] = eig.eigenvectors()(static_cast<Eigen::Index>(k), col);
        if (lambda <= kDegenerateEigen * top) {
            lambda = 0.0;
            std::fill(v.begin(), v.end(), 0.0);
        } else {
            std::size_t arg = 0;
            for (std::size_t k = 1; k < K; ++k)
                if (std::abs(v[k]) > std::abs(v[arg])) arg = k;
            if (v[arg] < 0.0)
                for (double &x : v) x = -x;
        }
        model.components.push_back(std::move(v));
        model.eigenvalues.push_back(lambda);
    }
    return model;
}

std::vector<double> pca_scores(const PeakImageStack &st, const PcaModel &model) {
    const std::size_t np = st.plane_size();
    const auto K = static_cast<std::size_t>(st.channels);
    std::vector<double> scores(3 * np, 0.0);
    for (std::size_t p = 0; p < np; ++p) {
        if (!st.mask.empty() && !st.mask[p]) continue;
        for (std::size_t r = 0; r < 3; ++r) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k)
                s += (st.at(static_cast<int>(k), p) - model.mean[k]) * model.components[r][k];
            scores[r * np + p] = s;
        }
    }
    return scores;
}

Image pca_rgb(const PeakImageStack &st, const PcaOptions &opt, PcaModel *model_out) {
    require(opt.clip_lo_pct >= 0.0 && opt.clip_hi_pct <= 100.0 && opt.clip_lo_pct <= opt.clip_hi_pct,
            "pca_rgb: invalid clip percentiles");
    const PcaModel model = fit_pca(st);
    const auto scores = pca_scores(st, model);
    const auto px = acquired_pixels(st);
    const std::size_t np = st.plane_size();

    Image out(st.width, st.height, 3, 0.0);
    for (std::size_t r = 0; r < 3; ++r) {
        std::vector<double> vals(px.size());
        for (std::size_t i = 0; i < px.size(); ++i) vals[i] = scores[r * np + px[i]];
        const double lo = percentile(vals, opt.clip_lo_pct);
        const double hi = percentile(std::move(vals), opt.clip_hi_pct);
        for (std::size_t p : px) {
            double v = 0.5;
            if (hi > lo) v = (std::clamp(scores[r * np + p], lo, hi) - lo) / (hi - lo);
            out.data[r * np + p] = v;
        }
    }
    if (model_out) *model_out = model;
    return out;
}

} // namespace msihist::reduce
