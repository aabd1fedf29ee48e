#pragma once

#include <cstddef>
#include <string>

#include "slsnet/attention.hpp"

namespace slsnet {

/// Rank-1 factorised convolution: a d x 1 vertical conv, ReLU, a 1 x d
/// horizontal conv, ReLU. Same-padding keeps the spatial extents.
class FactorizedLayer {
 public:
  enum class Activation { relu, identity };

  FactorizedLayer() = default;
  FactorizedLayer(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t d,
                  Rng& rng);

  Tensor forward(const Tensor& a0) const;
  void state(StateRefs& out);

  Conv2d vert;
  Conv2d horz;
  std::size_t d = 3;
  // Test hook: identity makes the layer exactly a conv with kernel vert * horz^T.
  Activation activation = Activation::relu;
};

/// Factorised layer followed by channel attention, optionally residual.
class FcmBlock {
 public:
  FcmBlock() = default;
  FcmBlock(const std::string& name, std::size_t in_c, std::size_t out_c, bool residual, Rng& rng,
           std::size_t d = 3);

  Tensor forward(const Tensor& x) const;
  void state(StateRefs& out);

  FactorizedLayer factorized;
  ChannelAttention cam;
  bool residual = true;
};

struct FactorizedSavings {
  std::size_t factorized_params = 0;
  std::size_t full2d_params = 0;
};

/// Weight + bias counts of a factorised layer versus the d x d conv it replaces.
FactorizedSavings count_factorized_savings(std::size_t in_c, std::size_t out_c, std::size_t d);

}  // namespace slsnet
