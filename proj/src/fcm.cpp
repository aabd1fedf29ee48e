#include "slsnet/fcm.hpp"

#include "slsnet/error.hpp"

namespace slsnet {

FactorizedLayer::FactorizedLayer(const std::string& name, std::size_t in_c, std::size_t out_c,
                                 std::size_t d_, Rng& rng)
    : vert(name + ".vert", in_c, out_c, d_, 1, ConvOptions{1, (d_ - 1) / 2, 0}, rng),
      horz(name + ".horz", out_c, out_c, 1, d_, ConvOptions{1, 0, (d_ - 1) / 2}, rng),
      d(d_) {
  if (d_ % 2 == 0) throw ConfigError("factorized layer: kernel extent must be odd");
}

Tensor FactorizedLayer::forward(const Tensor& a0) const {
  if (a0.shape().c != vert.weight.value.shape().c) {
    throw DimensionError("factorized layer: input has " + std::to_string(a0.shape().c) +
                         " channels, layer expects " +
                         std::to_string(vert.weight.value.shape().c));
  }
  auto phi = [this](const Tensor& t) { return activation == Activation::relu ? relu(t) : t; };
  return phi(horz.forward(phi(vert.forward(a0))));
}

void FactorizedLayer::state(StateRefs& out) {
  vert.state(out);
  horz.state(out);
}

FcmBlock::FcmBlock(const std::string& name, std::size_t in_c, std::size_t out_c, bool residual_,
                   Rng& rng, std::size_t d)
    : factorized(name + ".factorized", in_c, out_c, d, rng), cam(name + ".cam"),
      residual(residual_) {
  if (residual && in_c != out_c) {
    throw ConfigError("FCM block: residual connection needs in_c == out_c");
  }
}

Tensor FcmBlock::forward(const Tensor& x) const {
  Tensor y = cam.forward(factorized.forward(x));
  return residual ? add(y, x) : y;
}

void FcmBlock::state(StateRefs& out) {
  factorized.state(out);
  cam.state(out);
}

FactorizedSavings count_factorized_savings(std::size_t in_c, std::size_t out_c, std::size_t d) {
  return {in_c * out_c * d + out_c + out_c * out_c * d + out_c, in_c * out_c * d * d + out_c};
}

}  // namespace slsnet
