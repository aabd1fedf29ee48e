#pragma once

#include <cstddef>
#include <vector>

#include "slsnet/tensor.hpp"

namespace slsnet {

struct OptimizerConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam update for step t (1-based), then zeroes the
/// gradients. Parameters without a gradient are treated as having a zero
/// gradient. Throws NumericError naming the first non-finite gradient.
void adam_step(const std::vector<Parameter*>& params, const OptimizerConfig& cfg, std::size_t t);

}  // namespace slsnet
