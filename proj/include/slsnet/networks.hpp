#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "slsnet/attention.hpp"
#include "slsnet/fcm.hpp"
#include "slsnet/nn.hpp"

namespace slsnet {

/// Architecture and loss hyperparameters. Widths are full-scale values;
/// `scale_factor` multiplies every width for desk-scale runs.
struct ModelConfig {
  std::size_t input_size = 128;
  std::size_t base_channels = 16;      // multiscale branches
  std::size_t down1_channels = 32;     // first downsampling-attention layer
  std::size_t stage1_channels = 64;    // second down layer and first FCM stage
  std::size_t stage2_channels = 128;   // third down layer, second FCM stage, bottleneck
  std::size_t decoder1_channels = 128; // first upsample-attention layer
  std::size_t disc_channels = 64;      // discriminator widths d, 2d, 4d
  std::size_t n_fcm_stage1 = 4;
  std::size_t n_fcm_stage2 = 8;
  std::size_t n_fcm_decoder = 2;
  double dropout_rate = 0.5;
  double loss_lambda = 0.1;
  double loss_alpha = 0.5;
  double scale_factor = 1.0;

  /// round(width * scale_factor).
  std::size_t scaled(std::size_t width) const;
  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Names and shapes of the intermediate generator stages, in order.
struct ForwardTrace {
  std::vector<std::pair<std::string, Shape>> stages;
  Shape at(const std::string& stage) const;
};

class Generator {
 public:
  Generator(const ModelConfig& cfg, Rng& rng);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  /// (n, 3, s, s) -> (n, 1, s, s) soft mask. Dropout in the decoder is only
  /// active when mode.training is set.
  Tensor forward(const Tensor& x, const RunMode& mode, ForwardTrace* trace = nullptr);
  /// Four-scale conv + CAM aggregation: (n, 3, s, s) -> (n, base, s, s).
  Tensor multiscale_forward(const Tensor& x) const;

  void state(StateRefs& out);
  const ModelConfig& config() const { return cfg_; }

  struct ScaleBranch {
    Conv2d conv;
    ChannelAttention cam;
  };
  struct DownLayer {
    Conv2d conv;
    BatchNorm2d bn;
    PositionAttention pam;
    Tensor forward(const Tensor& x, const RunMode& mode);
  };
  struct Bottleneck {
    FactorizedLayer factorized;
    ChannelAttention cam;
    PositionAttention pam;
    Tensor forward(const Tensor& x, const RunMode& mode);
  };
  struct UpLayer {
    ConvTranspose2d deconv;
    BatchNorm2d bn;
    PositionAttention pam;
    std::vector<FcmBlock> fcms;
  };

  std::array<ScaleBranch, 4> multiscale;
  DownLayer down1, down2, down3;
  std::vector<FcmBlock> fcm_stage1, fcm_stage2;
  Bottleneck bottleneck;
  UpLayer up1, up2;
  Conv2d head;

 private:
  Tensor up_forward(UpLayer& layer, const Tensor& x, const RunMode& mode);

  ModelConfig cfg_;
};

class Discriminator {
 public:
  Discriminator(const ModelConfig& cfg, Rng& rng);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  /// Conditions on the image: concatenates (x, mask) into 4 channels and
  /// returns per-patch probabilities of shape (n, 1, s/16, s/16).
  Tensor forward(const Tensor& x, const Tensor& mask, const RunMode& mode);
  void state(StateRefs& out);

  Conv2d conv1;
  Conv2d conv2;
  BatchNorm2d bn2;
  PositionAttention pam;
  Conv2d conv3;
  BatchNorm2d bn3;
  ChannelAttention cam;
  Conv2d conv4;
};

/// Sum of all Parameter lengths.
std::size_t count_parameters(const StateRefs& state);
std::size_t count_parameters(Generator& gen);
std::size_t count_parameters(Discriminator& disc);

/// Parameter counts grouped by the first two components of the parameter name
/// ("gen.down1", "disc.conv2", ...), in construction order.
std::vector<std::pair<std::string, std::size_t>> parameter_breakdown(const StateRefs& state);

/// 1 where mask >= threshold, else 0. threshold must lie in (0, 1).
Tensor binarize(const Tensor& mask, double threshold = 0.5);

}  // namespace slsnet
