#pragma once

// Independent reference implementations used only by tests. None of these
// share code paths with the library routines they check.

#include "msihist/nn/tensor.hpp"
#include "msihist/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

// Piecewise-linear interpolation by scanning every segment.
inline std::vector<double> interp(const std::vector<double> &xs, const std::vector<double> &ys,
                                  const std::vector<double> &targets) {
    std::vector<double> out;
    for (double t : targets) {
        double v = 0.0;
        for (std::size_t s = 0; s + 1 < xs.size(); ++s) {
            if (t == xs[s]) {
                v = ys[s];
                break;
            }
            if (t == xs[s + 1]) {
                v = ys[s + 1];
                break;
            }
            if (t > xs[s] && t < xs[s + 1]) {
                const double w = (t - xs[s]) / (xs[s + 1] - xs[s]);
                v = (1.0 - w) * ys[s] + w * ys[s + 1];
                break;
            }
        }
        out.push_back(v);
    }
    return out;
}

// Enumerate local maxima (plateaus by scanning outwards), sort, suppress.
inline std::vector<std::size_t> pick_peaks(const std::vector<double> &v, const std::vector<double> &mz,
                                           std::size_t k, double min_sep) {
    struct Cand {
        std::size_t i;
        double val;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        if (v[i - 1] == v[i]) continue;  // not the leftmost plateau index
        std::size_t r = i;
        while (r + 1 < v.size() && v[r + 1] == v[i]) ++r;
        if (r + 1 >= v.size()) continue;
        if (v[i - 1] < v[i] && v[r + 1] < v[i]) cands.push_back({i, v[i]});
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand &a, const Cand &b) {
        if (a.val != b.val) return a.val > b.val;
        return mz[a.i] < mz[b.i];
    });
    std::vector<std::size_t> out;
    for (const auto &c : cands) {
        if (out.size() >= k) break;
        bool ok = true;
        for (std::size_t j : out)
            if (std::abs(mz[j] - mz[c.i]) < min_sep) ok = false;
        if (ok) out.push_back(c.i);
    }
    return out;
}

// Direct 7-loop cross-correlation, N x C x H x W input, O x C x kh x kw weight.
inline std::vector<double> conv2d(const std::vector<double> &x, int N, int C, int H, int W,
                                  const std::vector<double> &w, int O, int kh, int kw, const std::vector<double> &b,
                                  int stride, int pad, int &OH, int &OW) {
    OH = (H + 2 * pad - kh) / stride + 1;
    OW = (W + 2 * pad - kw) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(N) * O * OH * OW, 0.0);
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double s = b.empty() ? 0.0 : b[o];
                    for (int c = 0; c < C; ++c)
                        for (int i = 0; i < kh; ++i)
                            for (int j = 0; j < kw; ++j) {
                                const int y = oy * stride - pad + i, xx = ox * stride - pad + j;
                                if (y < 0 || y >= H || xx < 0 || xx >= W) continue;
                                s += x[((static_cast<std::size_t>(n) * C + c) * H + y) * W + xx] *
                                     w[((static_cast<std::size_t>(o) * C + c) * kh + i) * kw + j];
                            }
                    out[((static_cast<std::size_t>(n) * O + o) * OH + oy) * OW + ox] = s;
                }
    return out;
}

inline std::vector<double> random_vector(std::mt19937_64 &rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double &x : v) x = u(rng);
    return v;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Central finite differences of L = <f(inputs), R> against reverse-mode
// gradients, for every element of every input that requires grad.
// Relative error uses max(|analytic|, |numeric|, floor) as the denominator.
inline GradCheckResult grad_check(std::vector<msihist::nn::Tensor> inputs,
                                  const std::function<msihist::nn::Tensor(std::vector<msihist::nn::Tensor> &)> &f,
                                  std::uint64_t seed, double eps = 1e-5, double floor = 1e-3,
                                  std::size_t max_elems_per_input = 4000) {
    using msihist::nn::Tensor;
    std::mt19937_64 rng(seed);
    Tensor probe = f(inputs);
    const auto R = random_vector(rng, probe.size());
    auto loss_value = [&](std::vector<Tensor> &in) {
        msihist::nn::NoGradGuard no_grad;
        const Tensor out = f(in);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * R[i];
        return s;
    };

    for (auto &t : inputs) t.zero_grad();
    {
        // Seed d<out, R>/d(out) = R through a one-off weighted-sum node.
        Tensor out = f(inputs);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * R[i];
        Tensor l = Tensor::make_result({1}, {s}, {out}, [R](msihist::nn::Node &self) {
            auto &g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * R[i];
        });
        l.backward();
    }

    GradCheckResult res;
    for (auto &t : inputs) {
        if (!t.requires_grad()) continue;
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        const std::size_t n = t.size();
        const std::size_t step = std::max<std::size_t>(1, n / max_elems_per_input);
        for (std::size_t i = 0; i < n; i += step) {
            const double orig = t.data()[i];
            t.data()[i] = orig + eps;
            const double lp = loss_value(inputs);
            t.data()[i] = orig - eps;
            const double lm = loss_value(inputs);
            t.data()[i] = orig;
            const double num = (lp - lm) / (2.0 * eps);
            const double a = analytic[i];
            const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
            res.max_rel_error = std::max(res.max_rel_error, rel);
            ++res.checked;
        }
    }
    return res;
}

inline msihist::nn::Tensor random_tensor(std::mt19937_64 &rng, msihist::nn::Shape shape, bool requires_grad = true,
                                         double lo = -1.0, double hi = 1.0) {
    const auto n = msihist::nn::numel(shape);
    return msihist::nn::Tensor::from(std::move(shape), random_vector(rng, n, lo, hi), requires_grad);
}

} // namespace oracle
