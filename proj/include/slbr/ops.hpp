#pragma once

// Differentiable tensor ops. All image-like inputs are NCHW.

#include <span>

#include "slbr/autograd.hpp"

namespace slbr::ops {

// x: (N, Cin, H, W), weight: (Cout, Cin, kh, kw), bias: (1, Cout, 1, 1) or
// undefined. Zero padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

// Normalizes each (sample, channel group) to zero mean / unit variance, then
// applies a per-channel affine. groups == C is instance normalization,
// groups == 1 normalizes over all of C x H x W.
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               double eps = 1e-5);

Var leaky_relu(const Var& x, double slope);
inline Var relu(const Var& x) { return leaky_relu(x, 0.0); }
// x * sigmoid(x); smooth, so finite differences stay meaningful.
Var silu(const Var& x);
Var sigmoid(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);

Var concat_channels(std::span<const Var> parts);

// Bilinear resampling with half-pixel centers (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);

// 2x2 / stride 2 max pooling; odd trailing rows/cols are dropped.
Var max_pool2(const Var& x);

// out[n, c] = sum_p x[n,c,p] m[n,p] / (sum_p m[n,p] + eps); m is (N, 1, H, W).
Var masked_avg_pool(const Var& x, const Var& mask, double eps);

// (N, C, 1, 1) -> (N, C, H, W) by replication.
Var expand_spatial(const Var& v, int h, int w);

// Fixed (non-learnable) per-channel affine: y = (x - shift[c]) / div[c].
Var channel_standardize(const Var& x, std::span<const double> shift,
                        std::span<const double> div);

enum class Reduction { sum, mean };

// Binary cross-entropy against a fixed target; predictions are clamped to
// [clamp_eps, 1 - clamp_eps] before the logarithms.
Var binary_cross_entropy(const Var& pred, const Tensor& target, Reduction reduction,
                         double clamp_eps = 1e-7);

// mean |a - b| over every element; returns a scalar Var.
Var mean_abs_diff(const Var& a, const Var& b);

// Tensor-level (non-differentiable) helpers.
Tensor max_pool_tensor(const Tensor& x, int factor);
Tensor resize_bilinear_tensor(const Tensor& x, int out_h, int out_w);

}  // namespace slbr::ops
