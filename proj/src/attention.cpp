#include "slsnet/attention.hpp"

#include "slsnet/error.hpp"

namespace slsnet {

namespace {
void require_nonempty(const Shape& s, const char* who) {
  if (s.c == 0 || s.h * s.w == 0) {
    throw DimensionError(std::string(who) + ": needs at least one channel and one position, got " +
                         s.str());
  }
}
}  // namespace

ChannelAttention::ChannelAttention(const std::string& name)
    : gamma(name + ".gamma", Tensor::zeros(Shape{1, 1, 1, 1})) {}

Tensor ChannelAttention::attention_map(const Tensor& a) {
  const Shape& s = a.shape();
  require_nonempty(s, "channel attention");
  const Tensor flat = reshape(a, Shape{s.n, 1, s.c, s.plane()});
  return softmax_rows(matmul(flat, flat, false, true));
}

Tensor ChannelAttention::forward(const Tensor& a) const {
  const Shape& s = a.shape();
  require_nonempty(s, "channel attention");
  const Tensor flat = reshape(a, Shape{s.n, 1, s.c, s.plane()});
  const Tensor x = softmax_rows(matmul(flat, flat, false, true));
  const Tensor attended = reshape(matmul(x, flat), s);
  return add(mul_scalar(attended, gamma.value), a);
}

void ChannelAttention::state(StateRefs& out) { out.params.push_back(&gamma); }

PositionAttention::PositionAttention(const std::string& name, std::size_t channels, Rng& rng)
    : b{Conv2d(name + ".b.conv", channels, channels, 1, 1, {}, rng),
        BatchNorm2d(name + ".b.bn", channels)},
      c{Conv2d(name + ".c.conv", channels, channels, 1, 1, {}, rng),
        BatchNorm2d(name + ".c.bn", channels)},
      d{Conv2d(name + ".d.conv", channels, channels, 1, 1, {}, rng),
        BatchNorm2d(name + ".d.bn", channels)},
      eta(name + ".eta", Tensor::zeros(Shape{1, 1, 1, 1})) {}

Tensor PositionAttention::Branch::forward(const Tensor& a, const RunMode& mode) {
  return relu(bn.forward(conv.forward(a), mode));
}

Tensor PositionAttention::forward(const Tensor& a, const RunMode& mode) {
  require_nonempty(a.shape(), "position attention");
  const Tensor bf = b.forward(a, mode);
  const Tensor cf = c.forward(a, mode);
  const Tensor df = d.forward(a, mode);
  // Queries are C (destination j), keys B (source i), values D.
  const Tensor attended = softmax_attention(cf, bf, df);
  return add(mul_scalar(attended, eta.value), a);
}

void PositionAttention::state(StateRefs& out) {
  for (Branch* br : {&b, &c, &d}) {
    br->conv.state(out);
    br->bn.state(out);
  }
  out.params.push_back(&eta);
}

}  // namespace slsnet
