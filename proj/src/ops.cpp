#include "slsnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "graph.hpp"
#include "slsnet/kernels.hpp"

namespace slsnet {

using detail::grad_of;
using detail::make_result;
using detail::Node;
using detail::require;

namespace {

std::span<const real> data_or_empty(const Tensor& t) {
  return t.defined() ? t.data() : std::span<const real>{};
}

void check_bias(const Tensor& bias, std::size_t channels) {
  if (bias.defined() && bias.size() != channels) {
    throw DimensionError("bias length " + std::to_string(bias.size()) + " does not match " +
                         std::to_string(channels) + " output channels");
  }
}

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                        const char* axis) {
  const std::size_t padded = in + 2 * pad;
  if (padded < k) {
    throw ConfigError(std::string("conv2d: kernel larger than padded input along ") + axis);
  }
  if ((padded - k) % stride != 0) {
    throw ConfigError(std::string("conv2d: non-integer output extent along ") + axis + " ((" +
                      std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                      std::to_string(k) + ") / " + std::to_string(stride) + ")");
  }
  return (padded - k) / stride + 1;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, ConvOptions opt) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (opt.stride == 0) throw ConfigError("conv2d: stride must be positive");
  require(xs.c == ws.c, "conv2d: channel axis mismatch, input has " + std::to_string(xs.c) +
                            " channels but weight expects " + std::to_string(ws.c));
  check_bias(bias, ws.n);

  kernels::ConvGeom g;
  g.batch = xs.n;
  g.in_c = xs.c, g.in_h = xs.h, g.in_w = xs.w;
  g.out_c = ws.n, g.kh = ws.h, g.kw = ws.w;
  g.stride = opt.stride, g.pad_h = opt.pad_h, g.pad_w = opt.pad_w;
  g.out_h = conv_extent(xs.h, ws.h, opt.stride, opt.pad_h, "height");
  g.out_w = conv_extent(xs.w, ws.w, opt.stride, opt.pad_w, "width");

  const Shape out{xs.n, g.out_c, g.out_h, g.out_w};
  std::vector<real> y(out.size());
  kernels::conv2d_forward(g, x.data(), weight.data(), data_or_empty(bias), y);

  return make_result(out, std::move(y), "conv2d", {&x, &weight, &bias}, [g](Node& self) {
    const Node& xn = *self.parents[0];
    const Node& wn = *self.parents[1];
    kernels::conv2d_backward(g, xn.data, wn.data, self.grad, grad_of(self, 0), grad_of(self, 1),
                             self.parents[2] ? grad_of(self, 2) : std::span<real>{});
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  return conv2d(x, weight, bias, ConvOptions{stride, padding, padding});
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t padding, std::size_t output_padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (stride == 0) throw ConfigError("conv_transpose2d: stride must be positive");
  if (output_padding >= stride) {
    throw ConfigError("conv_transpose2d: output_padding must be smaller than stride");
  }
  require(xs.c == ws.n, "conv_transpose2d: channel axis mismatch, input has " +
                            std::to_string(xs.c) + " channels but weight expects " +
                            std::to_string(ws.n));
  check_bias(bias, ws.c);
  auto extent = [&](std::size_t in, std::size_t k, const char* axis) {
    const std::size_t full = (in - 1) * stride + k + output_padding;
    if (in == 0 || full <= 2 * padding) {
      throw ConfigError(std::string("conv_transpose2d: non-positive output extent along ") + axis);
    }
    return full - 2 * padding;
  };

  kernels::ConvGeom g;
  g.batch = xs.n;
  g.in_c = xs.c, g.in_h = xs.h, g.in_w = xs.w;
  g.out_c = ws.c, g.kh = ws.h, g.kw = ws.w;
  g.stride = stride, g.pad_h = padding, g.pad_w = padding;
  g.out_h = extent(xs.h, ws.h, "height");
  g.out_w = extent(xs.w, ws.w, "width");

  const Shape out{xs.n, g.out_c, g.out_h, g.out_w};
  std::vector<real> y(out.size());
  kernels::conv_transpose2d_forward(g, x.data(), weight.data(), data_or_empty(bias), y);

  return make_result(out, std::move(y), "conv_transpose2d", {&x, &weight, &bias},
                     [g](Node& self) {
                       kernels::conv_transpose2d_backward(
                           g, self.parents[0]->data, self.parents[1]->data, self.grad,
                           grad_of(self, 0), grad_of(self, 1),
                           self.parents[2] ? grad_of(self, 2) : std::span<real>{});
                     });
}

Tensor maxpool2(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.h % 2 != 0) throw DimensionError("maxpool2: odd height " + std::to_string(s.h));
  if (s.w % 2 != 0) throw DimensionError("maxpool2: odd width " + std::to_string(s.w));
  const Shape out{s.n, s.c, s.h / 2, s.w / 2};
  std::vector<real> y(out.size());
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  kernels::maxpool2_forward(s.n * s.c, s.h, s.w, x.data(), y, *argmax);
  return make_result(out, std::move(y), "maxpool2", {&x}, [s, argmax](Node& self) {
    kernels::maxpool2_backward(s.n * s.c, s.h, s.w, self.grad, *argmax, grad_of(self, 0));
  });
}

Tensor bilinear_resize(const Tensor& x, std::size_t h, std::size_t w) {
  const Shape& s = x.shape();
  if (h == 0 || w == 0) throw DimensionError("bilinear: zero target extent");
  if (s.h == 0 || s.w == 0) throw DimensionError("bilinear: empty input plane");
  const Shape out{s.n, s.c, h, w};
  std::vector<real> y(out.size());
  kernels::bilinear_forward(s.n * s.c, s.h, s.w, h, w, x.data(), y);
  return make_result(out, std::move(y), "bilinear", {&x}, [s, h, w](Node& self) {
    kernels::bilinear_backward(s.n * s.c, s.h, s.w, h, w, self.grad, grad_of(self, 0));
  });
}

Tensor bilinear_upsample(const Tensor& x, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw DimensionError("bilinear_upsample: zero target extent");
  if (h < x.shape().h) throw DimensionError("bilinear_upsample: target height below input");
  if (w < x.shape().w) throw DimensionError("bilinear_upsample: target width below input");
  return bilinear_resize(x, h, w);
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  require(as.c == 1 && bs.c == 1, "matmul: operands must be (n, 1, rows, cols) views");
  require(as.n == bs.n, "matmul: batch axis mismatch");
  const std::size_t rows = trans_a ? as.w : as.h;
  const std::size_t inner = trans_a ? as.h : as.w;
  const std::size_t inner_b = trans_b ? bs.w : bs.h;
  const std::size_t cols = trans_b ? bs.h : bs.w;
  require(inner == inner_b, "matmul: inner extent mismatch (" + std::to_string(inner) + " vs " +
                                std::to_string(inner_b) + ")");
  const std::size_t lda = as.w, ldb = bs.w;
  const Shape out{as.n, 1, rows, cols};
  std::vector<real> c(out.size());
  for (std::size_t n = 0; n < as.n; ++n) {
    kernels::gemm(trans_a, trans_b, rows, cols, inner, a.data().data() + n * as.item(), lda,
                  b.data().data() + n * bs.item(), ldb, c.data() + n * out.item(), cols, false);
  }
  return make_result(out, std::move(c), "matmul", {&a, &b}, [=](Node& self) {
    const real* ad = self.parents[0]->data.data();
    const real* bd = self.parents[1]->data.data();
    auto da = grad_of(self, 0);
    auto db = grad_of(self, 1);
    for (std::size_t n = 0; n < as.n; ++n) {
      const real* dc = self.grad.data() + n * out.item();
      const real* an = ad + n * as.item();
      const real* bn = bd + n * bs.item();
      if (!da.empty()) {
        real* dan = da.data() + n * as.item();
        if (!trans_a) {
          kernels::gemm(false, !trans_b, rows, inner, cols, dc, cols, bn, ldb, dan, lda, true);
        } else {
          kernels::gemm(trans_b, true, inner, rows, cols, bn, ldb, dc, cols, dan, lda, true);
        }
      }
      if (!db.empty()) {
        real* dbn = db.data() + n * bs.item();
        if (!trans_b) {
          kernels::gemm(!trans_a, false, inner, cols, rows, an, lda, dc, cols, dbn, ldb, true);
        } else {
          kernels::gemm(true, trans_a, cols, inner, rows, dc, cols, an, lda, dbn, ldb, true);
        }
      }
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  const Shape& s = x.shape();
  check_finite(x.data(), "softmax_rows input");
  const std::size_t rows = s.n * s.c * s.h;
  std::vector<real> y(s.size());
  kernels::softmax_rows_forward(rows, s.w, x.data(), y);
  return make_result(s, std::move(y), "softmax_rows", {&x}, [rows, s](Node& self) {
    auto dx = grad_of(self, 0);
    std::vector<real> tmp(s.size());
    kernels::softmax_rows_backward(rows, s.w, self.data, self.grad, tmp);
    for (std::size_t i = 0; i < tmp.size(); ++i) dx[i] += tmp[i];
  });
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  const Shape& vs = v.shape();
  require(qs.n == ks.n && ks.n == vs.n, "softmax_attention: batch axis mismatch");
  require(qs.c == ks.c, "softmax_attention: query/key channel mismatch");
  require(ks.h == vs.h && ks.w == vs.w, "softmax_attention: key/value spatial mismatch");
  const std::size_t dim = qs.c, dim_v = vs.c;
  const std::size_t n_dst = qs.plane(), n_src = ks.plane();
  const bool record = GradMode::enabled() &&
                      (q.requires_grad() || k.requires_grad() || v.requires_grad());
  if (record && n_dst * n_src > kMaxRecordedAttention) {
    throw ConfigError("softmax_attention: " + std::to_string(n_dst) + "x" +
                      std::to_string(n_src) +
                      " attention map too large to record for backward; lower the resolution");
  }

  const Shape out{qs.n, dim_v, qs.h, qs.w};
  std::vector<real> y(out.size());
  auto maps = std::make_shared<std::vector<real>>(record ? qs.n * n_dst * n_src : 0);
  for (std::size_t n = 0; n < qs.n; ++n) {
    std::span<real> s = record ? std::span<real>(maps->data() + n * n_dst * n_src, n_dst * n_src)
                               : std::span<real>{};
    kernels::attention_forward(dim, dim_v, n_dst, n_src, q.data().data() + n * qs.item(),
                               k.data().data() + n * ks.item(), v.data().data() + n * vs.item(),
                               y.data() + n * out.item(), s);
  }
  return make_result(out, std::move(y), "softmax_attention", {&q, &k, &v}, [=](Node& self) {
    auto dq = grad_of(self, 0);
    auto dk = grad_of(self, 1);
    auto dv = grad_of(self, 2);
    for (std::size_t n = 0; n < qs.n; ++n) {
      kernels::attention_backward(
          dim, dim_v, n_dst, n_src, self.parents[0]->data.data() + n * qs.item(),
          self.parents[1]->data.data() + n * ks.item(),
          self.parents[2]->data.data() + n * vs.item(),
          std::span<const real>(maps->data() + n * n_dst * n_src, n_dst * n_src),
          self.grad.data() + n * out.item(), dq.empty() ? nullptr : dq.data() + n * qs.item(),
          dk.empty() ? nullptr : dk.data() + n * ks.item(),
          dv.empty() ? nullptr : dv.data() + n * vs.item());
    }
  });
}

Tensor relu(const Tensor& x) {
  auto in = x.data();
  std::vector<real> y(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] > 0 ? in[i] : real(0);
  return make_result(x.shape(), std::move(y), "relu", {&x}, [](Node& self) {
    auto dx = grad_of(self, 0);
    const auto& in = self.parents[0]->data;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (in[i] > 0) dx[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  auto in = x.data();
  std::vector<real> y(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const acc_t v = in[i];
    // Split by sign so exp never overflows.
    y[i] = static_cast<real>(v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                    : std::exp(v) / (1.0 + std::exp(v)));
  }
  return make_result(x.shape(), std::move(y), "sigmoid", {&x}, [](Node& self) {
    auto dx = grad_of(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const real s = self.data[i];
      dx[i] += self.grad[i] * s * (1 - s);
    }
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  if (!training || rate == 0.0) return x;
  const real keep_scale = static_cast<real>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<real>>(x.size());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (auto& m : *mask) m = uniform(rng) >= rate ? keep_scale : real(0);
  auto in = x.data();
  std::vector<real> y(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] * (*mask)[i];
  return make_result(x.shape(), std::move(y), "dropout", {&x}, [mask](Node& self) {
    auto dx = grad_of(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 std::span<real> running_mean, std::span<real> running_var,
                 const BatchNormOptions& opt) {
  const Shape s = x.shape();
  require(gamma.size() == s.c && beta.size() == s.c, "batchnorm: scale/shift length != channels");
  require(running_mean.size() == s.c && running_var.size() == s.c,
          "batchnorm: running statistics length != channels");
  const std::size_t plane = s.plane();
  const std::size_t count = s.n * plane;
  if (opt.training && count < 2) {
    throw DimensionError("batchnorm: training mode needs more than one value per channel");
  }

  auto xhat = std::make_shared<std::vector<real>>(s.size());
  auto inv_std = std::make_shared<std::vector<acc_t>>(s.c);
  std::vector<real> y(s.size());
  auto in = x.data();
  auto g = gamma.data();
  auto b = beta.data();

  for (std::size_t c = 0; c < s.c; ++c) {
    acc_t mu, var;
    if (opt.training) {
      acc_t sum = 0;
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < plane; ++i) sum += in[(n * s.c + c) * plane + i];
      mu = sum / count;
      acc_t sq = 0;
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < plane; ++i) {
          const acc_t d = in[(n * s.c + c) * plane + i] - mu;
          sq += d * d;
        }
      var = sq / count;
      if (opt.update_stats) {
        running_mean[c] = static_cast<real>(opt.momentum * running_mean[c] + (1 - opt.momentum) * mu);
        const acc_t unbiased = sq / (count - 1);
        running_var[c] =
            static_cast<real>(opt.momentum * running_var[c] + (1 - opt.momentum) * unbiased);
      }
    } else {
      mu = running_mean[c];
      var = running_var[c];
    }
    const acc_t is = 1.0 / std::sqrt(var + opt.eps);
    (*inv_std)[c] = is;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t at = (n * s.c + c) * plane + i;
        const acc_t xh = (in[at] - mu) * is;
        (*xhat)[at] = static_cast<real>(xh);
        y[at] = static_cast<real>(g[c] * xh + b[c]);
      }
  }

  const bool training = opt.training;
  return make_result(s, std::move(y), "batchnorm", {&x, &gamma, &beta},
                     [s, xhat, inv_std, training, plane, count](Node& self) {
                       auto dx = grad_of(self, 0);
                       auto dg = grad_of(self, 1);
                       auto db = grad_of(self, 2);
                       const auto& g = self.parents[1]->data;
                       for (std::size_t c = 0; c < s.c; ++c) {
                         acc_t sum_dy = 0, sum_dy_xh = 0;
                         for (std::size_t n = 0; n < s.n; ++n)
                           for (std::size_t i = 0; i < plane; ++i) {
                             const std::size_t at = (n * s.c + c) * plane + i;
                             sum_dy += self.grad[at];
                             sum_dy_xh += acc_t(self.grad[at]) * (*xhat)[at];
                           }
                         if (!dg.empty()) dg[c] += static_cast<real>(sum_dy_xh);
                         if (!db.empty()) db[c] += static_cast<real>(sum_dy);
                         if (dx.empty()) continue;
                         const acc_t k = g[c] * (*inv_std)[c];
                         const acc_t mean_dy = training ? sum_dy / count : 0.0;
                         const acc_t mean_dy_xh = training ? sum_dy_xh / count : 0.0;
                         for (std::size_t n = 0; n < s.n; ++n)
                           for (std::size_t i = 0; i < plane; ++i) {
                             const std::size_t at = (n * s.c + c) * plane + i;
                             dx[at] += static_cast<real>(
                                 k * (self.grad[at] - mean_dy - (*xhat)[at] * mean_dy_xh));
                           }
                       }
                     });
}

namespace {

template <typename F, typename Ga, typename Gb>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, Ga ga, Gb gb) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + a.shape().str() +
                                      " vs " + b.shape().str());
  auto x = a.data();
  auto y = b.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return make_result(a.shape(), std::move(out), op, {&a, &b}, [ga, gb](Node& self) {
    auto da = grad_of(self, 0);
    auto db = grad_of(self, 1);
    const auto& x = self.parents[0]->data;
    const auto& y = self.parents[1]->data;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (!da.empty()) da[i] += ga(self.grad[i], x[i], y[i]);
      if (!db.empty()) db[i] += gb(self.grad[i], x[i], y[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](real x, real y) { return x + y; }, [](real g, real, real) { return g; },
      [](real g, real, real) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](real x, real y) { return x - y; }, [](real g, real, real) { return g; },
      [](real g, real, real) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](real x, real y) { return x * y; },
      [](real g, real, real y) { return g * y; }, [](real g, real x, real) { return g * x; });
}

Tensor scale(const Tensor& x, real factor) {
  auto in = x.data();
  std::vector<real> y(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] * factor;
  return make_result(x.shape(), std::move(y), "scale", {&x}, [factor](Node& self) {
    auto dx = grad_of(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * factor;
  });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  require(s.size() == 1, "mul_scalar: factor must hold exactly one value");
  const real f = s.data()[0];
  auto in = x.data();
  std::vector<real> y(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] * f;
  return make_result(x.shape(), std::move(y), "mul_scalar", {&x, &s}, [](Node& self) {
    auto dx = grad_of(self, 0);
    auto ds = grad_of(self, 1);
    const auto& in = self.parents[0]->data;
    const real f = self.parents[1]->data[0];
    acc_t acc = 0;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (!dx.empty()) dx[i] += self.grad[i] * f;
      acc += acc_t(self.grad[i]) * in[i];
    }
    if (!ds.empty()) ds[0] += static_cast<real>(acc);
  });
}

Tensor sum(const Tensor& x) {
  acc_t s = 0;
  for (real v : x.data()) s += v;
  return make_result(Shape{1, 1, 1, 1}, {static_cast<real>(s)}, "sum", {&x}, [](Node& self) {
    auto dx = grad_of(self, 0);
    for (auto& d : dx) d += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), real(1) / static_cast<real>(x.size()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape.size() == x.size(), "reshape: " + x.shape().str() + " cannot become " + shape.str());
  std::vector<real> y(x.data().begin(), x.data().end());
  return make_result(shape, std::move(y), "reshape", {&x}, [](Node& self) {
    auto dx = grad_of(self, 0);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  require(as.n == bs.n, "concat_channels: batch axis mismatch");
  require(as.h == bs.h, "concat_channels: height axis mismatch");
  require(as.w == bs.w, "concat_channels: width axis mismatch");
  const Shape out{as.n, as.c + bs.c, as.h, as.w};
  std::vector<real> y(out.size());
  for (std::size_t n = 0; n < as.n; ++n) {
    std::copy_n(a.data().data() + n * as.item(), as.item(), y.data() + n * out.item());
    std::copy_n(b.data().data() + n * bs.item(), bs.item(), y.data() + n * out.item() + as.item());
  }
  return make_result(out, std::move(y), "concat_channels", {&a, &b}, [as, bs, out](Node& self) {
    auto da = grad_of(self, 0);
    auto db = grad_of(self, 1);
    for (std::size_t n = 0; n < as.n; ++n) {
      const real* g = self.grad.data() + n * out.item();
      if (!da.empty())
        for (std::size_t i = 0; i < as.item(); ++i) da[n * as.item() + i] += g[i];
      if (!db.empty())
        for (std::size_t i = 0; i < bs.item(); ++i) db[n * bs.item() + i] += g[as.item() + i];
    }
  });
}

}  // namespace slsnet
