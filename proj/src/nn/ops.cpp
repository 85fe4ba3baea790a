#include "msihist/nn/ops.hpp"
#include "msihist/error.hpp"

#include "gemm.hpp"

#include <algorithm>
#include <cmath>

namespace msihist::nn {

namespace {

using detail::gemm;
using detail::transpose;

// Per-thread work buffers reused across calls (contents are never assumed).
double *scratch(int slot, std::size_t n) {
    thread_local std::vector<double> buffers[4];
    auto &b = buffers[slot];
    if (b.size() < n) b.resize(n);
    return b.data();
}

// dst[r * cols + c] += src[c * rows + r]
void add_transposed(int rows, int cols, const double *src, double *dst) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            dst[static_cast<std::size_t>(r) * cols + c] += src[static_cast<std::size_t>(c) * rows + r];
}

struct Im2ColGeom {
    int C, H, W, kh, kw, stride, pad, OH, OW;
};

// Output columns [lo, hi) whose input x = ox*s - p + j falls inside [0, W).
inline void valid_range(int j, const Im2ColGeom &g, int &lo, int &hi) {
    const int first = g.pad - j;  // ox * s >= first
    lo = first <= 0 ? 0 : (first + g.stride - 1) / g.stride;
    const int last = g.W - 1 + g.pad - j;  // ox * s <= last
    hi = last < 0 ? 0 : std::min(g.OW, last / g.stride + 1);
    if (hi < lo) hi = lo;
}

// col[(c*kh + i)*kw + j][oy*OW + ox] = img[c][oy*s - p + i][ox*s - p + j] (0 outside).
void im2col(const double *img, const Im2ColGeom &g, double *col) {
    const std::size_t P = static_cast<std::size_t>(g.OH) * g.OW;
    for (int c = 0; c < g.C; ++c)
        for (int i = 0; i < g.kh; ++i)
            for (int j = 0; j < g.kw; ++j) {
                double *row = col + ((static_cast<std::size_t>(c) * g.kh + i) * g.kw + j) * P;
                int lo, hi;
                valid_range(j, g, lo, hi);
                for (int oy = 0; oy < g.OH; ++oy) {
                    const int y = oy * g.stride - g.pad + i;
                    double *dst = row + static_cast<std::size_t>(oy) * g.OW;
                    if (y < 0 || y >= g.H) {
                        std::fill_n(dst, g.OW, 0.0);
                        continue;
                    }
                    const double *src = img + (static_cast<std::size_t>(c) * g.H + y) * g.W;
                    const int off = j - g.pad;
                    std::fill(dst, dst + lo, 0.0);
                    if (g.stride == 1) {
                        std::copy(src + lo + off, src + hi + off, dst + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + off];
                    }
                    std::fill(dst + hi, dst + g.OW, 0.0);
                }
            }
}

// Adjoint of im2col: scatters (accumulates) columns back into img.
void col2im(const double *col, const Im2ColGeom &g, double *img) {
    const std::size_t P = static_cast<std::size_t>(g.OH) * g.OW;
    for (int c = 0; c < g.C; ++c)
        for (int i = 0; i < g.kh; ++i)
            for (int j = 0; j < g.kw; ++j) {
                const double *row = col + ((static_cast<std::size_t>(c) * g.kh + i) * g.kw + j) * P;
                int lo, hi;
                valid_range(j, g, lo, hi);
                for (int oy = 0; oy < g.OH; ++oy) {
                    const int y = oy * g.stride - g.pad + i;
                    if (y < 0 || y >= g.H) continue;
                    double *dst = img + (static_cast<std::size_t>(c) * g.H + y) * g.W;
                    const double *src = row + static_cast<std::size_t>(oy) * g.OW;
                    const int off = j - g.pad;
                    if (g.stride == 1) {
                        for (int ox = lo; ox < hi; ++ox) dst[ox + off] += src[ox];
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride + off] += src[ox];
                    }
                }
            }
}

void check_4d(const Tensor &t, const char *op, const char *what) {
    require(t.defined() && t.shape().size() == 4,
            std::string(op) + ": " + what + " must be a 4-d tensor" +
                (t.defined() ? ", got " + shape_str(t.shape()) : std::string()));
}

std::vector<Tensor> with_optional(std::vector<Tensor> ts, const Tensor &b) {
    if (b.defined()) ts.push_back(b);
    return ts;
}

} // namespace

Tensor conv2d(const Tensor &x, const Tensor &w, const Tensor &b, ConvGeometry geo) {
    check_4d(x, "conv2d", "input");
    check_4d(w, "conv2d", "weight");
    const int N = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1));
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const int O = static_cast<int>(w.dim(0)), kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
    require(static_cast<int>(w.dim(1)) == C,
            "conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, input has " + std::to_string(C));
    require(!b.defined() || (b.size() == static_cast<std::size_t>(O)), "conv2d: bias size mismatch");
    require(geo.stride >= 1 && geo.pad >= 0, "conv2d: invalid stride/pad");
    const int OH = (H + 2 * geo.pad - kh) / geo.stride + 1;
    const int OW = (W + 2 * geo.pad - kw) / geo.stride + 1;
    require(H + 2 * geo.pad >= kh && W + 2 * geo.pad >= kw && OH >= 1 && OW >= 1,
            "conv2d: kernel larger than padded input");

    const Im2ColGeom g{C, H, W, kh, kw, geo.stride, geo.pad, OH, OW};
    const int CKK = C * kh * kw, P = OH * OW;
    double *col = scratch(0, static_cast<std::size_t>(CKK) * P);
    std::vector<double> out(static_cast<std::size_t>(N) * O * P);
    for (int n = 0; n < N; ++n) {
        im2col(x.data().data() + static_cast<std::size_t>(n) * C * H * W, g, col);
        double *y = out.data() + static_cast<std::size_t>(n) * O * P;
        gemm(O, P, CKK, w.data().data(), CKK, 1, col, y, false);
        if (b.defined())
            for (int o = 0; o < O; ++o) {
                const double bo = b.data()[o];
                for (int i = 0; i < P; ++i) y[static_cast<std::size_t>(o) * P + i] += bo;
            }
    }

    const bool has_bias = b.defined();
    return Tensor::make_result(
        {static_cast<std::size_t>(N), static_cast<std::size_t>(O), static_cast<std::size_t>(OH),
         static_cast<std::size_t>(OW)},
        std::move(out), with_optional({x, w}, b), [=](Node &self) {
            Node &xn = *self.parents[0];
            Node &wn = *self.parents[1];
            Node *bn = has_bias ? self.parents[2].get() : nullptr;
            const std::size_t ncol = static_cast<std::size_t>(CKK) * P;
            for (int n = 0; n < N; ++n) {
                const double *dy = self.grad.data() + static_cast<std::size_t>(n) * O * P;
                if (wn.requires_grad) {
                    // dW^T = col * dY^T, then added back transposed.
                    double *colb = scratch(0, ncol), *dyt = scratch(1, static_cast<std::size_t>(P) * O);
                    double *dwt = scratch(2, static_cast<std::size_t>(CKK) * O);
                    im2col(xn.data.data() + static_cast<std::size_t>(n) * C * H * W, g, colb);
                    transpose(O, P, dy, dyt);
                    gemm(CKK, O, P, colb, P, 1, dyt, dwt, false);
                    add_transposed(O, CKK, dwt, wn.ensure_grad().data());
                }
                if (bn && bn->requires_grad) {
                    auto &db = bn->ensure_grad();
                    for (int o = 0; o < O; ++o) {
                        double s = 0.0;
                        for (int i = 0; i < P; ++i) s += dy[static_cast<std::size_t>(o) * P + i];
                        db[o] += s;
                    }
                }
                if (xn.requires_grad) {
                    double *dcol = scratch(0, ncol);
                    gemm(CKK, P, O, wn.data.data(), 1, CKK, dy, dcol, false);
                    col2im(dcol, g, xn.ensure_grad().data() + static_cast<std::size_t>(n) * C * H * W);
                }
            }
        });
}

Tensor conv_transpose2d(const Tensor &x, const Tensor &w, const Tensor &b, ConvGeometry geo) {
    check_4d(x, "conv_transpose2d", "input");
    check_4d(w, "conv_transpose2d", "weight");
    const int N = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1));
    const int H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    require(static_cast<int>(w.dim(0)) == C,
            "conv_transpose2d: weight expects " + std::to_string(w.dim(0)) + " input channels, input has " +
                std::to_string(C));
    const int O = static_cast<int>(w.dim(1)), kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
    require(!b.defined() || (b.size() == static_cast<std::size_t>(O)), "conv_transpose2d: bias size mismatch");
    require(geo.stride >= 1 && geo.pad >= 0, "conv_transpose2d: invalid stride/pad");
    const int OH = (H - 1) * geo.stride - 2 * geo.pad + kh;
    const int OW = (W - 1) * geo.stride - 2 * geo.pad + kw;
    require(OH >= 1 && OW >= 1, "conv_transpose2d: empty output");

    // The forward pass is col2im of the conv2d geometry that maps the
    // OH x OW output back onto H x W.
    const Im2ColGeom g{O, OH, OW, kh, kw, geo.stride, geo.pad, H, W};
    const int OKK = O * kh * kw, P = H * W;
    const std::size_t out_plane = static_cast<std::size_t>(O) * OH * OW;
    double *col = scratch(0, static_cast<std::size_t>(OKK) * P);
    std::vector<double> out(static_cast<std::size_t>(N) * out_plane, 0.0);
    for (int n = 0; n < N; ++n) {
        gemm(OKK, P, C, w.data().data(), 1, OKK, x.data().data() + static_cast<std::size_t>(n) * C * P, col, false);
        double *dst = out.data() + n * out_plane;
        col2im(col, g, dst);
        if (b.defined())
            for (int o = 0; o < O; ++o) {
                const double bo = b.data()[o];
                for (int i = 0; i < OH * OW; ++i) dst[static_cast<std::size_t>(o) * OH * OW + i] += bo;
            }
    }

    const bool has_bias = b.defined();
    return Tensor::make_result(
        {static_cast<std::size_t>(N), static_cast<std::size_t>(O), static_cast<std::size_t>(OH),
         static_cast<std::size_t>(OW)},
        std::move(out), with_optional({x, w}, b), [=](Node &self) {
            Node &xn = *self.parents[0];
            Node &wn = *self.parents[1];
            Node *bn = has_bias ? self.parents[2].get() : nullptr;
            double *dcol = scratch(0, static_cast<std::size_t>(OKK) * P);
            for (int n = 0; n < N; ++n) {
                const double *dy = self.grad.data() + n * out_plane;
                if (bn && bn->requires_grad) {
                    auto &db = bn->ensure_grad();
                    for (int o = 0; o < O; ++o) {
                        double s = 0.0;
                        for (int i = 0; i < OH * OW; ++i) s += dy[static_cast<std::size_t>(o) * OH * OW + i];
                        db[o] += s;
                    }
                }
                if (!xn.requires_grad && !wn.requires_grad) continue;
                im2col(dy, g, dcol);
                if (xn.requires_grad)
                    gemm(C, P, OKK, wn.data.data(), OKK, 1, dcol,
                         xn.ensure_grad().data() + static_cast<std::size_t>(n) * C * P, true);
                if (wn.requires_grad) {
                    // dW^T = dcol * X^T, then added back transposed.
                    double *xt = scratch(1, static_cast<std::size_t>(P) * C);
                    double *dwt = scratch(2, static_cast<std::size_t>(OKK) * C);
                    transpose(C, P, xn.data.data() + static_cast<std::size_t>(n) * C * P, xt);
                    gemm(OKK, C, P, dcol, P, 1, xt, dwt, false);
                    add_transposed(C, OKK, dwt, wn.ensure_grad().data());
                }
            }
        });
}

Tensor max_pool2x2(const Tensor &x) {
    check_4d(x, "max_pool2x2", "input");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(H % 2 == 0 && W % 2 == 0, "max_pool2x2: spatial dims must be even, got " + shape_str(x.shape()));
    const std::size_t OH = H / 2, OW = W / 2;
    std::vector<double> out(N * C * OH * OW);
    std::vector<std::size_t> arg(out.size());
    const auto &in = x.values();
    for (std::size_t nc = 0; nc < N * C; ++nc)
        for (std::size_t oy = 0; oy < OH; ++oy)
            for (std::size_t ox = 0; ox < OW; ++ox) {
                const std::size_t base = nc * H * W + 2 * oy * W + 2 * ox;
                std::size_t best = base;
                for (std::size_t k : {base + 1, base + W, base + W + 1})
                    if (in[k] > in[best]) best = k;
                const std::size_t o = (nc * OH + oy) * OW + ox;
                out[o] = in[best];
                arg[o] = best;
            }
    return Tensor::make_result({N, C, OH, OW}, std::move(out), {x}, [arg = std::move(arg)](Node &self) {
        auto &dx = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += self.grad[i];
    });
}

namespace {

template <class F, class DF>
Tensor elementwise(const Tensor &x, F f, DF dfdx_from_xy) {
    std::vector<double> out(x.size());
    const auto &in = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [dfdx_from_xy](Node &self) {
        Node &xn = *self.parents[0];
        auto &dx = xn.ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * dfdx_from_xy(xn.data[i], self.data[i]);
    });
}

} // namespace

Tensor relu(const Tensor &x) {
    return elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor &x, double slope) {
    return elementwise(
        x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor &x) {
    return elementwise(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor &x) {
    return elementwise(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor instance_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta, double eps) {
    check_4d(x, "instance_norm", "input");
    const std::size_t N = x.dim(0), C = x.dim(1), M = x.dim(2) * x.dim(3);
    require(gamma.size() == C && beta.size() == C, "instance_norm: gamma/beta must have one entry per channel");
    require(eps > 0.0, "instance_norm: eps must be > 0");
    std::vector<double> out(x.size()), xhat(x.size()), invstd(N * C);
    const auto &in = x.values();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (n * C + c) * M;
            double mean = 0.0;
            for (std::size_t i = 0; i < M; ++i) mean += in[base + i];
            mean /= static_cast<double>(M);
            double var = 0.0;
            for (std::size_t i = 0; i < M; ++i) var += (in[base + i] - mean) * (in[base + i] - mean);
            var /= static_cast<double>(M);
            const double is = 1.0 / std::sqrt(var + eps);
            invstd[n * C + c] = is;
            const double gm = gamma.data()[c], bt = beta.data()[c];
            for (std::size_t i = 0; i < M; ++i) {
                xhat[base + i] = (in[base + i] - mean) * is;
                out[base + i] = gm * xhat[base + i] + bt;
            }
        }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gamma, beta},
        [N, C, M, xhat = std::move(xhat), invstd = std::move(invstd)](Node &self) {
            Node &xn = *self.parents[0];
            Node &gn = *self.parents[1];
            Node &bn = *self.parents[2];
            const auto &dy = self.grad;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t base = (n * C + c) * M;
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (std::size_t i = 0; i < M; ++i) {
                        sum_dy += dy[base + i];
                        sum_dy_xhat += dy[base + i] * xhat[base + i];
                    }
                    if (gn.requires_grad) gn.ensure_grad()[c] += sum_dy_xhat;
                    if (bn.requires_grad) bn.ensure_grad()[c] += sum_dy;
                    if (!xn.requires_grad) continue;
                    auto &dx = xn.ensure_grad();
                    const double g = gn.data[c], is = invstd[n * C + c], m = static_cast<double>(M);
                    for (std::size_t i = 0; i < M; ++i)
                        dx[base + i] += g * is / m * (m * dy[base + i] - sum_dy - xhat[base + i] * sum_dy_xhat);
                }
        });
}

Tensor concat_channels(const Tensor &a, const Tensor &b) {
    check_4d(a, "concat_channels", "first input");
    check_4d(b, "concat_channels", "second input");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat_channels: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t N = a.dim(0), Ca = a.dim(1) * a.dim(2) * a.dim(3), Cb = b.dim(1) * b.dim(2) * b.dim(3);
    std::vector<double> out(N * (Ca + Cb));
    for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(a.data().data() + n * Ca, Ca, out.data() + n * (Ca + Cb));
        std::copy_n(b.data().data() + n * Cb, Cb, out.data() + n * (Ca + Cb) + Ca);
    }
    return Tensor::make_result({N, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)}, std::move(out), {a, b},
                               [N, Ca, Cb](Node &self) {
                                   Node &an = *self.parents[0];
                                   Node &bn = *self.parents[1];
                                   for (std::size_t n = 0; n < N; ++n) {
                                       const double *g = self.grad.data() + n * (Ca + Cb);
                                       if (an.requires_grad) {
                                           double *d = an.ensure_grad().data() + n * Ca;
                                           for (std::size_t i = 0; i < Ca; ++i) d[i] += g[i];
                                       }
                                       if (bn.requires_grad) {
                                           double *d = bn.ensure_grad().data() + n * Cb;
                                           for (std::size_t i = 0; i < Cb; ++i) d[i] += g[Ca + i];
                                       }
                                   }
                               });
}

Tensor add(const Tensor &a, const Tensor &b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node &self) {
        for (auto &p : self.parents) {
            if (!p->requires_grad) continue;
            auto &d = p->ensure_grad();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
        }
    });
}

Tensor scale(const Tensor &a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [s](Node &self) {
        auto &d = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * s;
    });
}

namespace {

// Mean over elements of f(pred, target) with df/dpred (and -df/dpred for the target).
template <class F, class DF>
Tensor pairwise_mean(const Tensor &pred, const Tensor &target, const char *name, F f, DF df) {
    require(pred.shape() == target.shape(), std::string(name) + ": shape mismatch " + shape_str(pred.shape()) +
                                                " vs " + shape_str(target.shape()));
    require(pred.size() > 0, std::string(name) + ": empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += f(pred.values()[i], target.values()[i]);
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    return Tensor::make_result({1}, {s * inv_n}, {pred, target}, [df, inv_n](Node &self) {
        Node &pn = *self.parents[0];
        Node &tn = *self.parents[1];
        const double g = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < pn.data.size(); ++i) {
            const double d = g * df(pn.data[i], tn.data[i]);
            if (pn.requires_grad) pn.ensure_grad()[i] += d;
            if (tn.requires_grad) tn.ensure_grad()[i] -= d;
        }
    });
}

} // namespace

Tensor mse(const Tensor &pred, const Tensor &target) {
    return pairwise_mean(
        pred, target, "mse", [](double p, double t) { return (p - t) * (p - t); },
        [](double p, double t) { return 2.0 * (p - t); });
}

Tensor l1(const Tensor &pred, const Tensor &target) {
    return pairwise_mean(
        pred, target, "l1", [](double p, double t) { return std::abs(p - t); },
        [](double p, double t) { return p > t ? 1.0 : (p < t ? -1.0 : 0.0); });
}

Tensor bce_with_logits(const Tensor &logits, double label) {
    require(logits.size() > 0, "bce_with_logits: empty input");
    double s = 0.0;
    for (double z : logits.values()) s += std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
    const double inv_n = 1.0 / static_cast<double>(logits.size());
    return Tensor::make_result({1}, {s * inv_n}, {logits}, [label, inv_n](Node &self) {
        Node &zn = *self.parents[0];
        auto &dz = zn.ensure_grad();
        const double g = self.grad[0] * inv_n;
        for (std::size_t i = 0; i < dz.size(); ++i) {
            const double z = zn.data[i];
            const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            dz[i] += g * (sig - label);
        }
    });
}

Tensor dot_constant(const Tensor &x, const std::vector<double> &weights) {
    require(weights.size() == x.size(), "dot_constant: weight count mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.values()[i] * weights[i];
    return Tensor::make_result({1}, {s}, {x}, [weights](Node &self) {
        auto &d = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[0] * weights[i];
    });
}

} // namespace msihist::nn
