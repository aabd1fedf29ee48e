#include <doctest.h>

#include <cmath>

#include "slsnet/error.hpp"
#include "slsnet/networks.hpp"
#include "support.hpp"

using namespace slsnet;
using namespace testing;

namespace {
ModelConfig desk(std::size_t size) {
  ModelConfig c;
  c.input_size = size;
  c.scale_factor = 0.25;
  return c;
}
}  // namespace

TEST_CASE("full-scale parameter count") {
  Rng rng(1);
  ModelConfig cfg;
  Generator g(cfg, rng);
  Discriminator d(cfg, rng);
  const auto total = count_parameters(g) + count_parameters(d);
  CHECK(count_parameters(g) == 1619756);
  CHECK(count_parameters(d) == 715075);
  CHECK(total >= 2200000);
  CHECK(total <= 2500000);

  StateRefs refs;
  g.state(refs);
  std::size_t sum = 0;
  for (const auto& [name, n] : parameter_breakdown(refs)) sum += n;
  CHECK(sum == count_parameters(g));
  CHECK(parameter_breakdown(refs).front().first == "gen.multiscale0");
}

TEST_CASE("shape ladder") {
  Rng rng(2);
  for (std::size_t s : {64, 128, 256}) {
    CAPTURE(s);
    ModelConfig cfg = desk(s);
    Generator g(cfg, rng);
    Discriminator d(cfg, rng);
    ForwardTrace trace;
    NoGradGuard ng;
    auto x = random_tensor({1, 3, s, s}, rng, 0, 1);
    auto y = g.forward(x, RunMode{}, &trace);
    CHECK(y.shape() == Shape{1, 1, s, s});
    CHECK(trace.at("bottleneck").h == s / 8);
    CHECK(trace.at("bottleneck").w == s / 8);
    CHECK(trace.at("multiscale") == Shape{1, cfg.scaled(16), s, s});
    CHECK(d.forward(x, y, RunMode{}).shape() == Shape{1, 1, s / 16, s / 16});
  }
}

TEST_CASE("generator output is a finite soft mask and inference is deterministic") {
  Rng rng(3);
  Generator g(desk(64), rng);
  auto x = random_tensor({2, 3, 64, 64}, rng, 0, 1);
  NoGradGuard ng;
  auto a = g.forward(x, RunMode{});
  auto b = g.forward(x, RunMode{});
  CHECK(to_vec(a) == to_vec(b));
  for (auto v : a.data()) {
    CHECK(std::isfinite(v));
    CHECK(v > 0);
    CHECK(v < 1);
  }
}

TEST_CASE("training forward needs a random source for dropout") {
  Rng rng(4);
  Generator g(desk(64), rng);
  auto x = random_tensor({2, 3, 64, 64}, rng, 0, 1);
  RunMode m;
  m.training = true;
  CHECK_THROWS_AS(g.forward(x, m), UsageError);
  m.rng = &rng;
  auto y1 = g.forward(x, m);
  auto y2 = g.forward(x, m);
  CHECK(to_vec(y1) != to_vec(y2));
}

TEST_CASE("multiscale block against composed oracles") {
  Rng rng(5);
  ModelConfig cfg = desk(16);
  Generator g(cfg, rng);
  for (auto& br : g.multiscale) br.cam.gamma.value.mutable_data()[0] = 0.3;
  const Shape xs{1, 3, 16, 16};
  auto x = random_tensor(xs, rng, 0, 1);
  Vec fused(cfg.scaled(16) * 256, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t sz = 16 >> i;
    Shape ls{1, 3, sz, sz};
    Vec level = i == 0 ? to_vec(x) : oracle::bilinear(to_vec(x), xs, sz, sz);
    Shape ys;
    const auto& conv = g.multiscale[i].conv;
    Vec f = oracle::conv2d(level, ls, to_vec(conv.weight.value), conv.weight.value.shape(),
                           to_vec(conv.bias.value), 1, 1, 1, ys);
    for (auto& v : f) v = std::max(0.0, v);
    f = oracle::cam(f, ys, 0.3);
    if (i > 0) f = oracle::bilinear(f, ys, 16, 16);
    for (std::size_t k = 0; k < f.size(); ++k) fused[k] += 0.25 * f[k];
  }
  CHECK(max_abs_diff(g.multiscale_forward(x), fused) < 1e-5);

  for (auto& br : g.multiscale) {
    for (auto& v : br.conv.weight.value.mutable_data()) v = 0;
    for (auto& v : br.conv.bias.value.mutable_data()) v = 0;
    br.cam.gamma.value.mutable_data()[0] = 0;
  }
  const auto zero = g.multiscale_forward(x);
  for (auto v : zero.data()) CHECK(v == 0);
}

TEST_CASE("config validation and input checks") {
  Rng rng(6);
  ModelConfig bad = desk(60);
  CHECK_THROWS_AS(Generator(bad, rng), ConfigError);
  ModelConfig tiny;
  tiny.scale_factor = 0.01;
  CHECK_THROWS_AS(tiny.validate(), ConfigError);
  ModelConfig drop;
  drop.dropout_rate = 1.0;
  CHECK_THROWS_AS(drop.validate(), ConfigError);

  Generator g(desk(64), rng);
  NoGradGuard ng;
  CHECK_THROWS_AS(g.forward(Tensor::zeros({1, 3, 60, 60}), RunMode{}), ConfigError);
  CHECK_THROWS_AS(g.forward(Tensor::zeros({1, 1, 64, 64}), RunMode{}), ConfigError);
  Discriminator d(desk(64), rng);
  CHECK_THROWS_AS(d.forward(Tensor::zeros({1, 3, 64, 64}), Tensor::zeros({1, 1, 32, 32}), RunMode{}),
                  DimensionError);
}

TEST_CASE("binarize") {
  auto hi = binarize(Tensor::full({1, 1, 2, 2}, 0.7));
  auto lo = binarize(Tensor::full({1, 1, 2, 2}, 0.3));
  for (auto v : hi.data()) CHECK(v == 1);
  for (auto v : lo.data()) CHECK(v == 0);
  CHECK(binarize(Tensor::full({1, 1, 1, 1}, 0.5)).item() == 1);
  CHECK_THROWS_AS(binarize(hi, 1.0), ConfigError);
}

TEST_CASE("discriminator output lies in (0, 1)") {
  Rng rng(7);
  Discriminator d(desk(64), rng);
  auto x = random_tensor({2, 3, 64, 64}, rng, 0, 1);
  auto m = random_tensor({2, 1, 64, 64}, rng, 0, 1);
  auto o = d.forward(x, m, RunMode{});
  for (auto v : o.data()) {
    CHECK(v > 0);
    CHECK(v < 1);
  }
}
