#pragma once

// Differentiable operations. Each returns a new Tensor; when gradient
// recording is on and any input requires grad, the result carries a backward
// rule that accumulates into its inputs.

#include <cstddef>
#include <random>
#include <span>

#include "slsnet/tensor.hpp"

namespace slsnet {

using Rng = std::mt19937_64;

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

/// Cross-correlation. weight: (out_c, in_c, kh, kw); bias: (1, out_c, 1, 1) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvOptions opt);
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Adjoint of conv2d. weight: (in_c, out_c, kh, kw).
/// Output extent (h - 1) * stride - 2 * padding + kh + output_padding.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t padding, std::size_t output_padding = 0);

Tensor maxpool2(const Tensor& x);

/// Bilinear resampling to (h, w), align_corners = false. Works in both directions.
Tensor bilinear_resize(const Tensor& x, std::size_t h, std::size_t w);
/// bilinear_resize restricted to enlarging (target extents >= input extents).
Tensor bilinear_upsample(const Tensor& x, std::size_t h, std::size_t w);

/// Batched matrix product over (n, 1, rows, cols) views.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

/// Softmax along the last axis (each (n, c, h) row of length w).
Tensor softmax_rows(const Tensor& x);

/// Fused feature-major attention: q (n, d, hq, wq), k (n, d, hk, wk),
/// v (n, dv, hk, wk) -> (n, dv, hq, wq) with
/// out[:, j] = sum_i softmax_i(k_i . q_j) v[:, i].
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Largest n_dst * n_src map the fused attention will keep for backward.
inline constexpr std::size_t kMaxRecordedAttention = std::size_t{4096} * 4096;

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

struct BatchNormOptions {
  bool training = true;
  bool update_stats = true;  // only consulted in training mode
  double momentum = 0.9;     // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-5;
};

/// Per-channel batch normalisation. gamma, beta: (1, c, 1, 1).
/// running_mean / running_var have length c and are updated in place.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 std::span<real> running_mean, std::span<real> running_var,
                 const BatchNormOptions& opt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real factor);
/// x * s for a (1, 1, 1, 1) tensor s; differentiable in both.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_channels(const Tensor& a, const Tensor& b);

}  // namespace slsnet
