#include "slsnet/nn.hpp"

#include <cmath>

#include "slsnet/error.hpp"

namespace slsnet {

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 0.0;
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<real> values(shape.size());
  for (auto& v : values) v = static_cast<real>(dist(rng));
  return Tensor::from(shape, std::move(values), true);
}

Conv2d::Conv2d(const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t kh,
               std::size_t kw, ConvOptions opt, Rng& rng)
    : weight(name + ".weight", uniform_init(Shape{out_c, in_c, kh, kw}, in_c * kh * kw, rng)),
      bias(name + ".bias", uniform_init(Shape{1, out_c, 1, 1}, in_c * kh * kw, rng)),
      options(opt) {}

Tensor Conv2d::forward(const Tensor& x) const {
  return conv2d(x, weight.value, bias.value, options);
}

void Conv2d::state(StateRefs& out) {
  out.params.push_back(&weight);
  out.params.push_back(&bias);
}

ConvTranspose2d::ConvTranspose2d(const std::string& name, std::size_t in_c, std::size_t out_c,
                                 std::size_t k, std::size_t stride_, std::size_t padding_,
                                 std::size_t output_padding_, Rng& rng)
    // Fan-in of the adjoint conv, as PyTorch does for transposed layers.
    : weight(name + ".weight", uniform_init(Shape{in_c, out_c, k, k}, out_c * k * k, rng)),
      bias(name + ".bias", uniform_init(Shape{1, out_c, 1, 1}, out_c * k * k, rng)),
      stride(stride_), padding(padding_), output_padding(output_padding_) {}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  return conv_transpose2d(x, weight.value, bias.value, stride, padding, output_padding);
}

void ConvTranspose2d::state(StateRefs& out) {
  out.params.push_back(&weight);
  out.params.push_back(&bias);
}

BatchNorm2d::BatchNorm2d(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", Tensor::full(Shape{1, channels, 1, 1}, real(1))),
      beta(name + ".beta", Tensor::zeros(Shape{1, channels, 1, 1})),
      running_mean{name + ".running_mean", std::vector<real>(channels, real(0))},
      running_var{name + ".running_var", std::vector<real>(channels, real(1))} {}

Tensor BatchNorm2d::forward(const Tensor& x, const RunMode& mode) {
  BatchNormOptions opt;
  opt.training = mode.training;
  opt.update_stats = mode.update_stats;
  return batchnorm(x, gamma.value, beta.value, running_mean.values, running_var.values, opt);
}

void BatchNorm2d::state(StateRefs& out) {
  out.params.push_back(&gamma);
  out.params.push_back(&beta);
  out.buffers.push_back(&running_mean);
  out.buffers.push_back(&running_var);
}

}  // namespace slsnet
