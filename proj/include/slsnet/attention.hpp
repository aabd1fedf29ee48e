#pragma once

#include <string>

#include "slsnet/nn.hpp"

namespace slsnet {

/// Channel attention (CAM). Channels attend to channels through the softmax
/// of their Gram matrix; the attended features are scaled by a learned gamma
/// (initialised to 0, so a fresh module is the identity) and added back.
class ChannelAttention {
 public:
  ChannelAttention() = default;
  explicit ChannelAttention(const std::string& name);

  Tensor forward(const Tensor& a) const;
  /// The (n, 1, c, c) row-stochastic channel map for `a`.
  static Tensor attention_map(const Tensor& a);
  void state(StateRefs& out);

  Parameter gamma;
};

/// Position attention (PAM). Three 1x1 conv + batchnorm + ReLU branches
/// produce B, C, D from the input; every position j gathers D over all
/// positions i with weights softmax_i(B_i . C_j), scaled by a learned eta
/// (initialised to 0) and added back.
class PositionAttention {
 public:
  PositionAttention() = default;
  PositionAttention(const std::string& name, std::size_t channels, Rng& rng);

  Tensor forward(const Tensor& a, const RunMode& mode);
  void state(StateRefs& out);

  struct Branch {
    Conv2d conv;
    BatchNorm2d bn;
    Tensor forward(const Tensor& a, const RunMode& mode);
  };

  Branch b, c, d;
  Parameter eta;
};

}  // namespace slsnet
