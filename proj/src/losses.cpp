#include "slsnet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "graph.hpp"
#include "slsnet/ops.hpp"

namespace slsnet {

using detail::grad_of;
using detail::make_result;
using detail::Node;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(who) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

void require_binary(const Tensor& t, const char* who) {
  for (real v : t.data())
    if (v != 0 && v != 1) throw DomainError(std::string(who) + ": mask value " + std::to_string(v) + " is not 0 or 1");
}

void require_unit_interval(const Tensor& t, const char* who) {
  for (real v : t.data())
    if (!(v >= 0 && v <= 1)) throw DomainError(std::string(who) + ": value " + std::to_string(v) + " outside [0, 1]");
}

struct JaccardSums {
  acc_t gp = 0, gg = 0, pp = 0;
  acc_t denom() const { return gg + pp - gp + kJaccardSmoothing; }
  bool both_empty() const { return gg == 0 && pp == 0; }
};

JaccardSums jaccard_sums(const real* g, const real* p, std::size_t count) {
  JaccardSums s;
  for (std::size_t i = 0; i < count; ++i) {
    s.gp += acc_t(g[i]) * p[i];
    s.gg += acc_t(g[i]) * g[i];
    s.pp += acc_t(p[i]) * p[i];
  }
  return s;
}

// Closed-form per-pixel derivative, scaled by `weight` and added to `out`.
void add_soft_jaccard_grad(const Tensor& g, const Tensor& p, real weight, std::span<real> out) {
  const Shape& s = g.shape();
  const std::size_t item = s.item();
  const real* gd = g.data().data();
  const real* pd = p.data().data();
  const acc_t per_item = acc_t(weight) / static_cast<acc_t>(s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    const JaccardSums js = jaccard_sums(gd + n * item, pd + n * item, item);
    if (js.both_empty()) continue;
    const acc_t u = js.denom();
    const acc_t u2 = u * u;
    for (std::size_t i = 0; i < item; ++i) {
      const acc_t gi = gd[n * item + i];
      const acc_t pi = pd[n * item + i];
      out[n * item + i] += static_cast<real>(per_item * (-gi * u + (2 * pi - gi) * js.gp) / u2);
    }
  }
}

}  // namespace

double jaccard_distance(const Tensor& gt, const Tensor& pred) {
  require_same_shape(gt, pred, "jaccard_distance");
  require_binary(gt, "jaccard_distance");
  require_binary(pred, "jaccard_distance");
  const Shape& s = gt.shape();
  if (s.n == 0) return 0.0;
  double total = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    std::size_t inter = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < s.item(); ++i) {
      const bool g = gt.data()[n * s.item() + i] != 0;
      const bool p = pred.data()[n * s.item() + i] != 0;
      inter += g && p;
      a += g;
      b += p;
    }
    const std::size_t uni = a + b - inter;
    total += uni == 0 ? 0.0 : 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(s.n);
}

Tensor soft_jaccard_loss(const Tensor& g, const Tensor& p) {
  require_same_shape(g, p, "soft_jaccard_loss");
  require_unit_interval(g, "soft_jaccard_loss");
  require_unit_interval(p, "soft_jaccard_loss");
  const Shape& s = g.shape();
  if (s.n == 0) throw DimensionError("soft_jaccard_loss: empty batch");
  acc_t total = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const JaccardSums js =
        jaccard_sums(g.data().data() + n * s.item(), p.data().data() + n * s.item(), s.item());
    if (!js.both_empty()) total += 1.0 - js.gp / js.denom();
  }
  const real loss = static_cast<real>(total / static_cast<acc_t>(s.n));
  const Tensor g_const = g.detach();
  return make_result(Shape{1, 1, 1, 1}, {loss}, "soft_jaccard", {&g, &p},
                     [g_const](Node& self) {
                       auto dp = grad_of(self, 1);
                       if (dp.empty()) return;
                       Tensor p_view = Tensor::from(self.parents[1]->shape, self.parents[1]->data);
                       add_soft_jaccard_grad(g_const, p_view, self.grad[0], dp);
                     });
}

Tensor soft_jaccard_grad(const Tensor& g, const Tensor& p) {
  require_same_shape(g, p, "soft_jaccard_grad");
  require_unit_interval(g, "soft_jaccard_grad");
  require_unit_interval(p, "soft_jaccard_grad");
  std::vector<real> out(g.size(), real(0));
  add_soft_jaccard_grad(g, p, real(1), out);
  return Tensor::from(g.shape(), std::move(out));
}

Tensor bce(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce");
  const std::size_t count = pred.size();
  if (count == 0) throw DimensionError("bce: empty input");
  auto clamp = [](acc_t p) { return std::clamp(p, kBceClamp, 1.0 - kBceClamp); };
  acc_t total = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const acc_t p = clamp(pred.data()[i]);
    const acc_t t = target.data()[i];
    total -= t * std::log(p) + (1 - t) * std::log(1 - p);
  }
  const Tensor t_const = target.detach();
  return make_result(Shape{1, 1, 1, 1}, {static_cast<real>(total / count)}, "bce",
                     {&pred, &target}, [t_const, clamp, count](Node& self) {
                       auto dp = grad_of(self, 0);
                       if (dp.empty()) return;
                       const auto& pd = self.parents[0]->data;
                       const acc_t scale = acc_t(self.grad[0]) / count;
                       for (std::size_t i = 0; i < count; ++i) {
                         const acc_t p = clamp(pd[i]);
                         const acc_t t = t_const.data()[i];
                         dp[i] += static_cast<real>(scale * (-t / p + (1 - t) / (1 - p)));
                       }
                     });
}

Tensor l1_loss(const Tensor& target, const Tensor& pred) {
  require_same_shape(target, pred, "l1_loss");
  const std::size_t count = pred.size();
  if (count == 0) throw DimensionError("l1_loss: empty input");
  acc_t total = 0;
  for (std::size_t i = 0; i < count; ++i) total += std::abs(acc_t(target.data()[i]) - pred.data()[i]);
  const Tensor t_const = target.detach();
  return make_result(Shape{1, 1, 1, 1}, {static_cast<real>(total / count)}, "l1",
                     {&target, &pred}, [t_const, count](Node& self) {
                       auto dp = grad_of(self, 1);
                       if (dp.empty()) return;
                       const auto& pd = self.parents[1]->data;
                       const real step = static_cast<real>(self.grad[0] / count);
                       for (std::size_t i = 0; i < count; ++i) {
                         const real diff = pd[i] - t_const.data()[i];
                         dp[i] += diff > 0 ? step : (diff < 0 ? -step : real(0));
                       }
                     });
}

Tensor generator_loss(const Tensor& disc_out_on_fake, const Tensor& fake_mask,
                      const Tensor& gt_mask, const LossWeights& w) {
  const Tensor ones = Tensor::full(disc_out_on_fake.shape(), real(1));
  Tensor loss = bce(disc_out_on_fake, ones);
  if (w.lambda != 0) loss = add(loss, scale(l1_loss(gt_mask, fake_mask), static_cast<real>(w.lambda)));
  if (w.alpha != 0) {
    loss = add(loss, scale(soft_jaccard_loss(gt_mask, fake_mask), static_cast<real>(w.alpha)));
  }
  return loss;
}

Tensor discriminator_loss(const Tensor& disc_out_on_real, const Tensor& disc_out_on_fake) {
  const Tensor ones = Tensor::full(disc_out_on_real.shape(), real(1));
  const Tensor zeros = Tensor::zeros(disc_out_on_fake.shape());
  return add(bce(disc_out_on_real, ones), bce(disc_out_on_fake, zeros));
}

}  // namespace slsnet
