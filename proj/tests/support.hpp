#pragma once

// Shared test helpers: random tensors, finite-difference gradient checks and
// brute-force reference implementations written independently of src/.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "slsnet/ops.hpp"
#include "slsnet/tensor.hpp"

namespace testing {

using slsnet::real;
using slsnet::Rng;
using slsnet::Shape;
using slsnet::Tensor;
using Vec = std::vector<double>;

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<real> v(s.size());
  for (auto& x : v) x = static_cast<real>(d(rng));
  return Tensor::from(s, std::move(v), requires_grad);
}

inline Vec to_vec(const Tensor& t) { return Vec(t.data().begin(), t.data().end()); }

inline double max_abs_diff(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Vec& b) { return max_abs_diff(to_vec(a), b); }

struct GradCheckResult {
  double max_error = 0;  // |analytic - fd| / max(1, |fd|)
  std::size_t checked = 0;
};

/// Central differences of `loss` with respect to up to `samples` coordinates
/// of each input, compared against the recorded gradient.
inline GradCheckResult grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                                  Rng& rng, std::size_t samples = 20, double h = 1e-4) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  GradCheckResult r;
  for (auto& t : inputs) {
    const std::vector<real> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> coords(t.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > samples) coords.resize(samples);
    for (std::size_t i : coords) {
      const real saved = t.mutable_data()[i];
      double up, down;
      {
        slsnet::NoGradGuard g;
        t.mutable_data()[i] = static_cast<real>(saved + h);
        up = loss().item();
        t.mutable_data()[i] = static_cast<real>(saved - h);
        down = loss().item();
        t.mutable_data()[i] = saved;
      }
      const double fd = (up - down) / (2 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      r.max_error = std::max(r.max_error, std::abs(a - fd) / std::max(1.0, std::abs(fd)));
      ++r.checked;
    }
  }
  return r;
}

/// sum(w * f) with fixed random weights: a scalar loss that exercises every
/// output coordinate with a distinct upstream gradient.
inline Tensor weighted_sum(const Tensor& f, const Tensor& w) { return slsnet::sum(slsnet::mul(f, w)); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("slsnet_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

namespace oracle {

inline Vec conv2d(const Vec& x, Shape xs, const Vec& w, Shape ws, const Vec& b, std::size_t stride,
                  std::size_t ph, std::size_t pw, Shape& ys) {
  const std::size_t oh = (xs.h + 2 * ph - ws.h) / stride + 1;
  const std::size_t ow = (xs.w + 2 * pw - ws.w) / stride + 1;
  ys = Shape{xs.n, ws.n, oh, ow};
  Vec y(ys.size(), 0.0);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ws.n; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b.empty() ? 0.0 : b[o];
          for (std::size_t c = 0; c < xs.c; ++c)
            for (std::size_t u = 0; u < ws.h; ++u)
              for (std::size_t v = 0; v < ws.w; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(ph);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pw);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(xs.h) || xx >= static_cast<long>(xs.w)) continue;
                acc += x[((n * xs.c + c) * xs.h + yy) * xs.w + xx] * w[((o * ws.c + c) * ws.h + u) * ws.w + v];
              }
          y[((n * ws.n + o) * oh + i) * ow + j] = acc;
        }
  return y;
}

/// Transposed conv by scattering every input pixel through the kernel.
/// w: (in_c, out_c, k, k).
inline Vec conv_transpose2d(const Vec& x, Shape xs, const Vec& w, Shape ws, const Vec& b,
                            std::size_t stride, std::size_t pad, std::size_t out_pad, Shape& ys) {
  const std::size_t oh = (xs.h - 1) * stride + ws.h + out_pad - 2 * pad;
  const std::size_t ow = (xs.w - 1) * stride + ws.w + out_pad - 2 * pad;
  ys = Shape{xs.n, ws.c, oh, ow};
  Vec y(ys.size(), 0.0);
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t o = 0; o < ws.c; ++o)
      for (std::size_t p = 0; p < oh * ow; ++p) y[(n * ws.c + o) * oh * ow + p] = b.empty() ? 0.0 : b[o];
    for (std::size_t c = 0; c < xs.c; ++c)
      for (std::size_t i = 0; i < xs.h; ++i)
        for (std::size_t j = 0; j < xs.w; ++j) {
          const double xv = x[((n * xs.c + c) * xs.h + i) * xs.w + j];
          for (std::size_t o = 0; o < ws.c; ++o)
            for (std::size_t u = 0; u < ws.h; ++u)
              for (std::size_t v = 0; v < ws.w; ++v) {
                const long yy = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(oh) || xx >= static_cast<long>(ow)) continue;
                y[((n * ws.c + o) * oh + yy) * ow + xx] += xv * w[((c * ws.c + o) * ws.h + u) * ws.w + v];
              }
        }
  }
  return y;
}

inline Vec maxpool2(const Vec& x, Shape xs) {
  Vec y;
  for (std::size_t p = 0; p < xs.n * xs.c; ++p)
    for (std::size_t i = 0; i < xs.h / 2; ++i)
      for (std::size_t j = 0; j < xs.w / 2; ++j) {
        double m = -INFINITY;
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 2; ++v) m = std::max(m, x[(p * xs.h + 2 * i + u) * xs.w + 2 * j + v]);
        y.push_back(m);
      }
  return y;
}

/// Half-pixel-centre bilinear sample evaluated pixel by pixel.
inline Vec bilinear(const Vec& x, Shape xs, std::size_t oh, std::size_t ow) {
  auto axis = [](std::size_t o, std::size_t in, std::size_t out, std::size_t& a, std::size_t& b, double& t) {
    double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    if (src < 0) src = 0;
    a = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
    b = std::min(a + 1, in - 1);
    t = src - static_cast<double>(a);
  };
  Vec y;
  for (std::size_t p = 0; p < xs.n * xs.c; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t y0, y1, x0, x1;
        double ty, tx;
        axis(i, xs.h, oh, y0, y1, ty);
        axis(j, xs.w, ow, x0, x1, tx);
        auto at = [&](std::size_t r, std::size_t c) { return x[(p * xs.h + r) * xs.w + c]; };
        y.push_back((1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
                    ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1)));
      }
  return y;
}

inline Vec softmax_rows(const Vec& x, std::size_t cols) {
  Vec y(x.size());
  for (std::size_t r = 0; r < x.size() / cols; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(x[r * cols + c]);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = std::exp(x[r * cols + c]) / sum;
  }
  return y;
}

inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

/// E_j = gamma * sum_i x_ji A_i + A_j with x_ji = softmax_i(A_i . A_j), per item.
inline Vec cam(const Vec& a, Shape s, double gamma) {
  const std::size_t N = s.plane();
  Vec out(a.size());
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* A = a.data() + n * s.item();
    for (std::size_t j = 0; j < s.c; ++j) {
      std::vector<double> logit(s.c);
      double mx = -INFINITY;
      for (std::size_t i = 0; i < s.c; ++i) {
        double d = 0;
        for (std::size_t p = 0; p < N; ++p) d += A[i * N + p] * A[j * N + p];
        logit[i] = d;
        mx = std::max(mx, d);
      }
      double z = 0;
      for (auto& l : logit) z += (l = std::exp(l - mx));
      for (std::size_t p = 0; p < N; ++p) {
        double acc = 0;
        for (std::size_t i = 0; i < s.c; ++i) acc += logit[i] / z * A[i * N + p];
        out[n * s.item() + j * N + p] = gamma * acc + A[j * N + p];
      }
    }
  }
  return out;
}

/// E_j = eta * sum_i s_ji D_i + A_j with s_ji = softmax_i(B_i . C_j).
inline Vec pam_from_branches(const Vec& a, const Vec& B, const Vec& C, const Vec& D, Shape s,
                             double eta) {
  const std::size_t N = s.plane();
  Vec out(a.size());
  for (std::size_t n = 0; n < s.n; ++n) {
    const std::size_t base = n * s.item();
    for (std::size_t j = 0; j < N; ++j) {
      std::vector<double> logit(N);
      double mx = -INFINITY;
      for (std::size_t i = 0; i < N; ++i) {
        double d = 0;
        for (std::size_t c = 0; c < s.c; ++c) d += B[base + c * N + i] * C[base + c * N + j];
        logit[i] = d;
        mx = std::max(mx, d);
      }
      double z = 0;
      for (auto& l : logit) z += (l = std::exp(l - mx));
      for (std::size_t c = 0; c < s.c; ++c) {
        double acc = 0;
        for (std::size_t i = 0; i < N; ++i) acc += logit[i] / z * D[base + c * N + i];
        out[base + c * N + j] = eta * acc + a[base + c * N + j];
      }
    }
  }
  return out;
}

/// Training-mode batch normalisation with two-pass statistics, then ReLU.
inline Vec batchnorm_relu(const Vec& x, Shape s, const Vec& gamma, const Vec& beta, double eps = 1e-5) {
  Vec y(x.size());
  const std::size_t cnt = s.n * s.plane();
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t p = 0; p < s.plane(); ++p) mean += x[(n * s.c + c) * s.plane() + p];
    mean /= static_cast<double>(cnt);
    double var = 0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t p = 0; p < s.plane(); ++p) {
        const double d = x[(n * s.c + c) * s.plane() + p] - mean;
        var += d * d;
      }
    var /= static_cast<double>(cnt);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t p = 0; p < s.plane(); ++p) {
        const std::size_t i = (n * s.c + c) * s.plane() + p;
        y[i] = std::max(0.0, gamma[c] * (x[i] - mean) / std::sqrt(var + eps) + beta[c]);
      }
  }
  return y;
}

}  // namespace oracle
}  // namespace testing
