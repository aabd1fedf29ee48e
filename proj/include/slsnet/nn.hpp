#pragma once

// Parameter-holding building blocks shared by the attention modules and the
// networks.

#include <cstddef>
#include <string>
#include <vector>

#include "slsnet/ops.hpp"
#include "slsnet/tensor.hpp"

namespace slsnet {

/// Flat view of a module tree's trainable and persistent state.
struct StateRefs {
  std::vector<Parameter*> params;
  std::vector<Buffer*> buffers;
};

/// How a forward pass should behave.
struct RunMode {
  bool training = false;
  bool update_stats = true;  // batchnorm running statistics, training only
  Rng* rng = nullptr;        // dropout noise; required when training with dropout
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t kh,
         std::size_t kw, ConvOptions opt, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void state(StateRefs& out);

  Parameter weight;
  Parameter bias;
  ConvOptions options;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t k,
                  std::size_t stride, std::size_t padding, std::size_t output_padding, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void state(StateRefs& out);

  Parameter weight;
  Parameter bias;
  std::size_t stride = 1, padding = 0, output_padding = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, std::size_t channels);

  Tensor forward(const Tensor& x, const RunMode& mode);
  void state(StateRefs& out);

  Parameter gamma;
  Parameter beta;
  Buffer running_mean;
  Buffer running_var;
};

}  // namespace slsnet
