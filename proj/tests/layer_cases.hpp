#pragma once

// One random small instance per layer, compared against its brute-force
// oracle. Each function returns the max absolute deviation.

#include <map>
#include <string>

#include "slsnet/attention.hpp"
#include "slsnet/fcm.hpp"
#include "support.hpp"

namespace testing {

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double case_conv2d(Rng& rng) {
  const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 4, 7), pick(rng, 4, 7)};
  const std::size_t k = pick(rng, 1, 3), pad = pick(rng, 0, k / 2 + 1);
  std::size_t stride = pick(rng, 1, 2);
  if ((xs.h + 2 * pad - k) % stride || (xs.w + 2 * pad - k) % stride) stride = 1;
  const Shape ws{pick(rng, 1, 4), xs.c, k, k};
  auto x = random_tensor(xs, rng);
  auto w = random_tensor(ws, rng);
  auto b = random_tensor({1, ws.n, 1, 1}, rng);
  Shape ys;
  auto ref = oracle::conv2d(to_vec(x), xs, to_vec(w), ws, to_vec(b), stride, pad, pad, ys);
  auto y = slsnet::conv2d(x, w, b, stride, pad);
  return y.shape() == ys ? max_abs_diff(y, ref) : INFINITY;
}

inline double case_conv_transpose2d(Rng& rng) {
  const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 5), pick(rng, 2, 5)};
  const std::size_t k = pick(rng, 2, 4), stride = pick(rng, 1, 2);
  const std::size_t pad = pick(rng, 0, (k - 1) / 2), out_pad = stride > 1 ? pick(rng, 0, 1) : 0;
  const Shape ws{xs.c, pick(rng, 1, 3), k, k};
  auto x = random_tensor(xs, rng);
  auto w = random_tensor(ws, rng);
  auto b = random_tensor({1, ws.c, 1, 1}, rng);
  Shape ys;
  auto ref = oracle::conv_transpose2d(to_vec(x), xs, to_vec(w), ws, to_vec(b), stride, pad, out_pad, ys);
  auto y = slsnet::conv_transpose2d(x, w, b, stride, pad, out_pad);
  return y.shape() == ys ? max_abs_diff(y, ref) : INFINITY;
}

inline double case_maxpool2(Rng& rng) {
  const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), 2 * pick(rng, 1, 4), 2 * pick(rng, 1, 4)};
  auto x = random_tensor(xs, rng);
  return max_abs_diff(slsnet::maxpool2(x), oracle::maxpool2(to_vec(x), xs));
}

inline double case_bilinear_upsample(Rng& rng) {
  const Shape xs{1, pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
  const std::size_t oh = xs.h + pick(rng, 0, 7), ow = xs.w + pick(rng, 0, 7);
  auto x = random_tensor(xs, rng);
  return max_abs_diff(slsnet::bilinear_upsample(x, oh, ow), oracle::bilinear(to_vec(x), xs, oh, ow));
}

inline double case_softmax_rows(Rng& rng) {
  const Shape xs{1, pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 9)};
  auto x = random_tensor(xs, rng, -5, 5);
  return max_abs_diff(slsnet::softmax_rows(x), oracle::softmax_rows(to_vec(x), xs.w));
}

inline double case_matmul(Rng& rng) {
  const std::size_t m = pick(rng, 1, 6), k = pick(rng, 1, 6), n = pick(rng, 1, 6);
  auto a = random_tensor({1, 1, m, k}, rng);
  auto b = random_tensor({1, 1, k, n}, rng);
  return max_abs_diff(slsnet::matmul(a, b), oracle::matmul(to_vec(a), to_vec(b), m, k, n));
}

inline double case_cam(Rng& rng) {
  const Shape s{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
  slsnet::ChannelAttention cam("cam");
  const double gamma = std::uniform_real_distribution<double>(-1, 1)(rng);
  cam.gamma.value.mutable_data()[0] = static_cast<real>(gamma);
  auto a = random_tensor(s, rng);
  return max_abs_diff(cam.forward(a), oracle::cam(to_vec(a), s, gamma));
}

/// The three branches are recomputed with the conv and batchnorm oracles.
inline double case_pam(Rng& rng) {
  const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
  slsnet::PositionAttention pam("pam", s.c, rng);
  const double eta = std::uniform_real_distribution<double>(-1, 1)(rng);
  pam.eta.value.mutable_data()[0] = static_cast<real>(eta);
  for (auto* br : {&pam.b, &pam.c, &pam.d}) {
    for (auto& g : br->bn.gamma.value.mutable_data()) g = static_cast<real>(0.5 + 0.5 * (pick(rng, 0, 100) / 100.0));
    for (auto& g : br->bn.beta.value.mutable_data()) g = static_cast<real>(pick(rng, 0, 100) / 100.0 - 0.3);
  }
  auto a = random_tensor(s, rng);
  auto branch = [&](slsnet::PositionAttention::Branch& br) {
    Shape ys;
    auto conv = oracle::conv2d(to_vec(a), s, to_vec(br.conv.weight.value), br.conv.weight.value.shape(),
                               to_vec(br.conv.bias.value), 1, 0, 0, ys);
    return oracle::batchnorm_relu(conv, ys, to_vec(br.bn.gamma.value), to_vec(br.bn.beta.value));
  };
  auto B = branch(pam.b), C = branch(pam.c), D = branch(pam.d);
  slsnet::RunMode mode;
  mode.training = true;
  mode.update_stats = false;
  return max_abs_diff(pam.forward(a, mode), oracle::pam_from_branches(to_vec(a), B, C, D, s, eta));
}

/// Identity-activation factorised layer with zero biases against a full
/// d x d conv whose kernel is sum_m horz[o][m] (x) vert[m][c].
inline double case_factorized(Rng& rng) {
  const std::size_t d = 2 * pick(rng, 0, 2) + 1;
  const Shape s{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 3, 6), pick(rng, 3, 6)};
  const std::size_t out_c = pick(rng, 1, 3);
  slsnet::FactorizedLayer f("f", s.c, out_c, d, rng);
  f.activation = slsnet::FactorizedLayer::Activation::identity;
  for (auto& v : f.vert.bias.value.mutable_data()) v = 0;
  for (auto& v : f.horz.bias.value.mutable_data()) v = 0;
  const auto vert = to_vec(f.vert.weight.value);  // (out_c, in_c, d, 1)
  const auto horz = to_vec(f.horz.weight.value);  // (out_c, out_c, 1, d)
  Vec kernel(out_c * s.c * d * d, 0.0);
  for (std::size_t o = 0; o < out_c; ++o)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t m = 0; m < out_c; ++m)
        for (std::size_t u = 0; u < d; ++u)
          for (std::size_t v = 0; v < d; ++v)
            kernel[((o * s.c + c) * d + u) * d + v] += horz[(o * out_c + m) * d + v] * vert[(m * s.c + c) * d + u];
  auto x = random_tensor(s, rng);
  Shape ys;
  auto ref = oracle::conv2d(to_vec(x), s, kernel, Shape{out_c, s.c, d, d}, {}, 1, d / 2, d / 2, ys);
  return max_abs_diff(f.forward(x), ref);
}

inline const std::map<std::string, double (*)(Rng&)>& layer_cases() {
  static const std::map<std::string, double (*)(Rng&)> cases{
      {"conv2d", case_conv2d},       {"conv_transpose2d", case_conv_transpose2d},
      {"maxpool2", case_maxpool2},   {"bilinear_upsample", case_bilinear_upsample},
      {"softmax_rows", case_softmax_rows}, {"matmul", case_matmul},
      {"cam", case_cam},             {"pam", case_pam},
      {"factorized", case_factorized}};
  return cases;
}

}  // namespace testing
