#include <doctest.h>

#include <numeric>

#include "layer_cases.hpp"
#include "slsnet/error.hpp"

using namespace slsnet;
using namespace testing;

namespace {
RunMode train_mode() {
  RunMode m;
  m.training = true;
  m.update_stats = false;
  return m;
}
}  // namespace

TEST_CASE("layer oracles on random instances") {
  Rng rng(5);
  for (const auto& [name, fn] : layer_cases()) {
    CAPTURE(name);
    double worst = 0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, fn(rng));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("fresh attention modules are the identity") {
  Rng rng(6);
  auto a = random_tensor({2, 3, 4, 5}, rng);
  ChannelAttention cam("cam");
  PositionAttention pam("pam", 3, rng);
  CHECK(to_vec(cam.forward(a)) == to_vec(a));
  CHECK(to_vec(pam.forward(a, train_mode())) == to_vec(a));
}

TEST_CASE("single channel and single position degenerate cases") {
  Rng rng(7);
  ChannelAttention cam("cam");
  cam.gamma.value.mutable_data()[0] = 0.5;
  auto a = random_tensor({1, 1, 3, 3}, rng);
  auto map = ChannelAttention::attention_map(a);
  CHECK(map.data()[0] == doctest::Approx(1.0));
  auto e = cam.forward(a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(e.data()[i] == doctest::Approx(1.5 * a.data()[i]));

  PositionAttention pam("pam", 2, rng);
  pam.eta.value.mutable_data()[0] = 0.3;
  auto p = random_tensor({1, 2, 1, 1}, rng);
  RunMode eval;
  auto d = pam.d.forward(p, eval);
  auto out = pam.forward(p, eval);
  for (std::size_t i = 0; i < 2; ++i) CHECK(out.data()[i] == doctest::Approx(0.3 * d.data()[i] + p.data()[i]));
}

TEST_CASE("channel map is row-stochastic") {
  Rng rng(8);
  auto a = random_tensor({2, 5, 3, 3}, rng, -2, 2);
  auto map = ChannelAttention::attention_map(a);
  for (std::size_t r = 0; r < 10; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += map.data()[r * 5 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("CAM is equivariant under spatial permutation") {
  Rng rng(9);
  ChannelAttention cam("cam");
  cam.gamma.value.mutable_data()[0] = 0.7;
  const Shape s{1, 3, 2, 3};
  auto a = random_tensor(s, rng);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](const Vec& v) {
    Vec out(v.size());
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 6; ++p) out[c * 6 + p] = v[c * 6 + perm[p]];
    return out;
  };
  auto pa = permute(to_vec(a));
  auto lhs = to_vec(cam.forward(Tensor::from(s, std::vector<real>(pa.begin(), pa.end()))));
  CHECK(max_abs_diff(lhs, permute(to_vec(cam.forward(a)))) < 1e-12);
}

TEST_CASE("attention gradients through gamma, eta and the branch convs") {
  Rng rng(10);
  ChannelAttention cam("cam");
  cam.gamma.value.mutable_data()[0] = 0.4;
  PositionAttention pam("pam", 2, rng);
  pam.eta.value.mutable_data()[0] = 0.6;
  auto a = random_tensor({2, 2, 3, 3}, rng, -1, 1, true);
  auto w = random_tensor({2, 2, 3, 3}, rng);
  auto rc = grad_check([&] { return weighted_sum(cam.forward(a), w); }, {a, cam.gamma.value}, rng);
  CHECK(rc.max_error < 1e-5);
  // Eval-mode batchnorm keeps the loss smooth in the branch weights.
  RunMode eval;
  auto rp = grad_check([&] { return weighted_sum(pam.forward(a, eval), w); },
                       {a, pam.eta.value, pam.b.conv.weight.value, pam.c.conv.weight.value,
                        pam.d.conv.bias.value},
                       rng);
  CHECK(rp.max_error < 1e-5);
}

TEST_CASE("factorized layer examples") {
  Rng rng(12);
  FactorizedLayer f("f", 1, 1, 3, rng);
  auto set = [](Parameter& p, std::vector<real> v) { std::copy(v.begin(), v.end(), p.value.mutable_data().begin()); };
  set(f.vert.bias, {0});
  set(f.horz.bias, {0});

  SUBCASE("identity separable kernel") {
    set(f.vert.weight, {0, 1, 0});
    set(f.horz.weight, {0, 1, 0});
    auto x = random_tensor({1, 1, 5, 6}, rng, 0, 1);
    CHECK(to_vec(f.forward(x)) == to_vec(x));
  }
  SUBCASE("rank-1 sobel-like kernel") {
    f.activation = FactorizedLayer::Activation::identity;
    set(f.vert.weight, {1, 2, 1});
    set(f.horz.weight, {1, 0, -1});
    auto x = random_tensor({1, 1, 5, 6}, rng);
    Shape ys;
    auto ref = oracle::conv2d(to_vec(x), x.shape(), {1, 0, -1, 2, 0, -2, 1, 0, -1}, {1, 1, 3, 3}, {}, 1, 1, 1, ys);
    CHECK(max_abs_diff(f.forward(x), ref) < 1e-12);
  }
  SUBCASE("zero weights give the horizontal bias") {
    set(f.vert.weight, {0, 0, 0});
    set(f.horz.weight, {0, 0, 0});
    set(f.horz.bias, {0.7});
    auto y = f.forward(random_tensor({1, 1, 4, 4}, rng));
    for (auto v : y.data()) CHECK(v == doctest::Approx(0.7));
  }
  CHECK_THROWS_AS(f.forward(Tensor::zeros({1, 2, 4, 4})), DimensionError);
  CHECK_THROWS_AS(FactorizedLayer("g", 1, 1, 2, rng), ConfigError);
}

TEST_CASE("FCM block composition") {
  Rng rng(13);
  FcmBlock blk("b", 3, 3, true, rng);
  auto x = random_tensor({1, 3, 5, 5}, rng);
  for (auto* p : {&blk.factorized.vert.weight, &blk.factorized.vert.bias, &blk.factorized.horz.weight,
                  &blk.factorized.horz.bias})
    for (auto& v : p->value.mutable_data()) v = 0;
  CHECK(to_vec(blk.forward(x)) == to_vec(x));

  FcmBlock plain("p", 3, 4, false, rng);
  plain.cam.gamma.value.mutable_data()[0] = 0.25;
  auto xs = random_tensor({2, 3, 4, 4}, rng);
  auto mid = plain.factorized.forward(xs);
  auto ref = oracle::cam(to_vec(mid), mid.shape(), 0.25);
  CHECK(max_abs_diff(plain.forward(xs), ref) < 1e-9);
  CHECK(plain.forward(xs).shape() == Shape{2, 4, 4, 4});

  CHECK_THROWS_AS(FcmBlock("bad", 3, 4, true, rng), ConfigError);
}

TEST_CASE("factorized layer gradient away from ReLU kinks") {
  Rng rng(14);
  FactorizedLayer f("f", 2, 2, 3, rng);
  auto x = random_tensor({1, 2, 4, 4}, rng, -1, 1, true);
  auto w = random_tensor({1, 2, 4, 4}, rng);
  auto r = grad_check([&] { return weighted_sum(f.forward(x), w); },
                      {x, f.vert.weight.value, f.horz.weight.value, f.horz.bias.value}, rng, 30, 1e-6);
  CHECK(r.max_error < 1e-4);
}

TEST_CASE("factorized parameter savings") {
  auto a = count_factorized_savings(128, 128, 3);
  CHECK(a.factorized_params == 98560);
  CHECK(a.full2d_params == 147584);
  auto b = count_factorized_savings(1, 1, 1);
  CHECK(b.factorized_params == 4);
  CHECK(b.full2d_params == 2);
  CHECK(count_factorized_savings(3, 16, 3).full2d_params == 448);
  for (std::size_t c = 2; c < 40; c += 5)
    for (std::size_t d = 3; d < 9; d += 2) {
      auto s = count_factorized_savings(c, c, d);
      CHECK(s.factorized_params < s.full2d_params);
    }
}
