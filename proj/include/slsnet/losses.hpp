#pragma once

#include "slsnet/tensor.hpp"

namespace slsnet {

struct LossWeights {
  double lambda = 0.1;  // L1 term
  double alpha = 0.5;   // soft Jaccard term
};

/// Added to the soft-Jaccard denominator so both-empty masks are defined.
inline constexpr double kJaccardSmoothing = 1e-7;
/// Probabilities are clamped to [eps, 1 - eps] before taking logs.
inline constexpr double kBceClamp = 1e-7;

/// 1 - |gt & pred| / |gt | pred| on {0,1} tensors, averaged over the batch
/// axis. Both-empty images count as distance 0.
double jaccard_distance(const Tensor& gt, const Tensor& pred);

/// 1 - sum(g p) / (sum(g^2) + sum(p^2) - sum(g p) + eps) per image, averaged
/// over the batch. Differentiable in p; g is treated as a constant.
Tensor soft_jaccard_loss(const Tensor& g, const Tensor& p);

/// d soft_jaccard_loss / d p, the closed form used as the backward rule.
Tensor soft_jaccard_grad(const Tensor& g, const Tensor& p);

/// Mean binary cross-entropy of probabilities `pred` against `target`.
/// The gradient is evaluated at the clamped probability.
Tensor bce(const Tensor& pred, const Tensor& target);

/// mean |a - b|, differentiable in b.
Tensor l1_loss(const Tensor& target, const Tensor& pred);

/// -log D(x, G(x)) + lambda * L1(y, G(x)) + alpha * soft Jaccard(y, G(x)).
Tensor generator_loss(const Tensor& disc_out_on_fake, const Tensor& fake_mask,
                      const Tensor& gt_mask, const LossWeights& w);

/// -log D(x, y) - log(1 - D(x, G(x))).
Tensor discriminator_loss(const Tensor& disc_out_on_real, const Tensor& disc_out_on_fake);

}  // namespace slsnet
