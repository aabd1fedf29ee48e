#include <doctest.h>

#include <cmath>
#include <numeric>

#include "slsnet/error.hpp"
#include "slsnet/losses.hpp"
#include "support.hpp"

using namespace slsnet;
using namespace testing;

namespace {
Tensor row(std::vector<real> v) {
  const Shape s{1, 1, 1, v.size()};
  return Tensor::from(s, std::move(v));
}

Tensor random_binary(Shape s, Rng& rng, double p = 0.4) {
  std::bernoulli_distribution d(p);
  std::vector<real> v(s.size());
  for (auto& x : v) x = d(rng) ? 1 : 0;
  return Tensor::from(s, std::move(v));
}

// Direct evaluation of the soft Jaccard expression per item, then the batch mean.
double soft_jaccard_oracle(const Vec& g, const Vec& p, std::size_t items) {
  const std::size_t per = g.size() / items;
  double total = 0;
  for (std::size_t n = 0; n < items; ++n) {
    double gp = 0, gg = 0, pp = 0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      gp += g[i] * p[i];
      gg += g[i] * g[i];
      pp += p[i] * p[i];
    }
    const double u = gg + pp - gp;
    total += u == 0 ? 0 : 1 - gp / (u + kJaccardSmoothing);
  }
  return total / static_cast<double>(items);
}
}  // namespace

TEST_CASE("jaccard distance") {
  auto a = row({1, 1, 0, 0});
  CHECK(jaccard_distance(a, a) == 0);
  CHECK(jaccard_distance(a, row({0, 0, 1, 1})) == 1);
  CHECK(jaccard_distance(row({1, 1, 1, 0, 0}), row({1, 0, 0, 1, 0})) == doctest::Approx(0.75));
  CHECK(jaccard_distance(row({0, 0}), row({0, 0})) == 0);
  CHECK_THROWS_AS(jaccard_distance(row({0.5, 0}), row({0, 0})), DomainError);
  CHECK_THROWS_AS(jaccard_distance(row({1, 0}), row({1, 0, 0})), DimensionError);
}

TEST_CASE("soft jaccard values") {
  auto g = row({1, 0, 1});
  CHECK(soft_jaccard_loss(g, g).item() == doctest::Approx(0).epsilon(1e-6));
  CHECK(soft_jaccard_loss(g, row({0, 0, 0})).item() == doctest::Approx(1));
  CHECK(soft_jaccard_loss(row({1, 0}), row({0.5, 0.5})).item() == doctest::Approx(0.5));
  CHECK(soft_jaccard_loss(row({0, 0}), row({0, 0})).item() == 0);
  CHECK_THROWS_AS(soft_jaccard_loss(row({1, 0}), row({1.5, 0})), DomainError);
  CHECK_THROWS_AS(soft_jaccard_loss(row({1, 0}), row({-0.1, 0})), DomainError);
}

TEST_CASE("soft jaccard gradient closed form") {
  auto single = soft_jaccard_grad(row({1}), row({0.5}));
  CHECK(single.item() == doctest::Approx(-4.0 / 3.0).epsilon(1e-6));

  auto g = row({1, 0, 1, 1});
  const auto at_optimum = soft_jaccard_grad(g, g);
  for (auto v : at_optimum.data()) CHECK(std::abs(v) < 1e-6);

  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    auto gt = random_binary({2, 1, 4, 4}, rng);
    auto p = random_tensor({2, 1, 4, 4}, rng, 0.05, 0.95, true);
    auto r = grad_check([&] { return soft_jaccard_loss(gt, p); }, {p}, rng, 32);
    CHECK(r.max_error < 1e-6);
    p.zero_grad();
    soft_jaccard_loss(gt, p).backward();
    auto closed = soft_jaccard_grad(gt, p);
    CHECK(max_abs_diff(to_vec(closed), Vec(p.grad().begin(), p.grad().end())) < 1e-12);
  }
}

TEST_CASE("soft jaccard matches direct evaluation and the binary distance") {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    auto gt = random_binary({3, 1, 5, 5}, rng);
    auto p = random_tensor({3, 1, 5, 5}, rng, 0, 1);
    const double v = soft_jaccard_loss(gt, p).item();
    CHECK(v == doctest::Approx(soft_jaccard_oracle(to_vec(gt), to_vec(p), 3)).epsilon(1e-12));
    CHECK(v >= 0);
    CHECK(v <= 1);
    auto pb = random_binary({3, 1, 5, 5}, rng);
    CHECK(std::abs(soft_jaccard_loss(gt, pb).item() - jaccard_distance(gt, pb)) < 1e-6);
  }
}

TEST_CASE("bce") {
  CHECK(bce(row({0.5, 0.5}), row({1, 0})).item() == doctest::Approx(std::log(2.0)));
  CHECK(bce(row({1, 0}), row({1, 0})).item() < 1e-6);
  CHECK(bce(row({0.9}), row({1})).item() == doctest::Approx(-std::log(0.9)));
  CHECK(std::isfinite(bce(row({0}), row({1})).item()));

  Rng rng(3);
  auto p = random_tensor({1, 1, 3, 3}, rng, 0.1, 0.9, true);
  auto t = random_binary({1, 1, 3, 3}, rng);
  CHECK(grad_check([&] { return bce(p, t); }, {p}, rng).max_error < 1e-6);
}

TEST_CASE("discriminator loss") {
  CHECK(discriminator_loss(row({0.5}), row({0.5})).item() == doctest::Approx(2 * std::log(2.0)));
  CHECK(discriminator_loss(row({0.8}), row({0.3})).item() == doctest::Approx(0.5798).epsilon(1e-4));
  CHECK(discriminator_loss(row({1}), row({0})).item() < 1e-6);
}

TEST_CASE("generator loss is the weighted sum of its terms") {
  Rng rng(4);
  auto d = random_tensor({2, 1, 2, 2}, rng, 0.1, 0.9);
  auto fake = random_tensor({2, 1, 4, 4}, rng, 0.05, 0.95, true);
  auto gt = random_binary({2, 1, 4, 4}, rng);
  LossWeights w{0.1, 0.5};

  double adv = 0;
  for (auto v : d.data()) adv -= std::log(v);
  adv /= static_cast<double>(d.size());
  double l1 = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) l1 += std::abs(gt.data()[i] - fake.data()[i]);
  l1 /= static_cast<double>(gt.size());
  const double sj = soft_jaccard_oracle(to_vec(gt), to_vec(fake), 2);
  CHECK(generator_loss(d, fake, gt, w).item() == doctest::Approx(adv + 0.1 * l1 + 0.5 * sj).epsilon(1e-9));
  CHECK(generator_loss(d, fake, gt, {0, 0}).item() == doctest::Approx(adv).epsilon(1e-12));

  auto dd = random_tensor({2, 1, 2, 2}, rng, 0.1, 0.9, true);
  auto r = grad_check([&] { return generator_loss(dd, fake, gt, w); }, {dd, fake}, rng, 32);
  CHECK(r.max_error < 1e-5);

  auto ones = Tensor::full({1, 1, 1, 1}, real(1 - 1e-7));
  CHECK(generator_loss(ones, gt, gt, w).item() < 1e-5);
}

TEST_CASE("L1 term: moving fake toward gt never increases the loss") {
  Rng rng(5);
  auto gt = random_binary({1, 1, 4, 4}, rng);
  auto fake = random_tensor({1, 1, 4, 4}, rng, 0, 1);
  auto d = Tensor::full({1, 1, 1, 1}, 0.5);
  const double before = generator_loss(d, fake, gt, {1.0, 0.0}).item();
  std::vector<real> moved(fake.data().begin(), fake.data().end());
  moved[3] = static_cast<real>(0.5 * (moved[3] + gt.data()[3]));
  const double after = generator_loss(d, Tensor::from(fake.shape(), moved), gt, {1.0, 0.0}).item();
  CHECK(after <= before);
}

TEST_CASE("losses are invariant under a joint pixel permutation") {
  Rng rng(6);
  auto gt = random_binary({1, 1, 1, 12}, rng);
  auto p = random_tensor({1, 1, 1, 12}, rng, 0, 1);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<real> gp(12), pp(12);
  for (std::size_t i = 0; i < 12; ++i) {
    gp[i] = gt.data()[perm[i]];
    pp[i] = p.data()[perm[i]];
  }
  auto g2 = Tensor::from(gt.shape(), gp), p2 = Tensor::from(p.shape(), pp);
  CHECK(soft_jaccard_loss(gt, p).item() == doctest::Approx(soft_jaccard_loss(g2, p2).item()).epsilon(1e-14));
  CHECK(bce(p, gt).item() == doctest::Approx(bce(p2, g2).item()).epsilon(1e-14));
  CHECK(l1_loss(gt, p).item() == doctest::Approx(l1_loss(g2, p2).item()).epsilon(1e-14));
}
