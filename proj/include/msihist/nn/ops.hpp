#pragma once

// Differentiable operations on N x C x H x W tensors. Every op records its
// exact backward pass when an input requires a gradient.

#include "msihist/nn/tensor.hpp"

namespace msihist::nn {

struct ConvGeometry {
    int stride = 1;
    int pad = 0;
};

// x: N x C x H x W, w: O x C x kh x kw, b: O (may be undefined).
// Zero-padded cross-correlation.
Tensor conv2d(const Tensor &x, const Tensor &w, const Tensor &b, ConvGeometry g = {});

// x: N x C x H x W, w: C x O x kh x kw, b: O (may be undefined).
// Adjoint of conv2d with the same weight tensor and geometry; output
// spatial size is (H - 1) * stride - 2 * pad + k.
Tensor conv_transpose2d(const Tensor &x, const Tensor &w, const Tensor &b, ConvGeometry g = {});

// 2x2 max pooling with stride 2; H and W must be even.
Tensor max_pool2x2(const Tensor &x);

Tensor relu(const Tensor &x);
Tensor leaky_relu(const Tensor &x, double slope = 0.2);
Tensor sigmoid(const Tensor &x);
Tensor tanh(const Tensor &x);

// Per-sample, per-channel normalization followed by gamma * xhat + beta.
// gamma, beta: C.
Tensor instance_norm(const Tensor &x, const Tensor &gamma, const Tensor &beta, double eps = 1e-5);

// Concatenate along the channel axis.
Tensor concat_channels(const Tensor &a, const Tensor &b);

Tensor add(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double s);

// Scalar losses with mean reduction.
Tensor mse(const Tensor &pred, const Tensor &target);
Tensor l1(const Tensor &pred, const Tensor &target);
// Numerically stable binary cross-entropy on logits against a constant label.
Tensor bce_with_logits(const Tensor &logits, double label);

// Differentiable sum of all elements (weighted by a constant tensor when given).
Tensor dot_constant(const Tensor &x, const std::vector<double> &weights);

} // namespace msihist::nn
