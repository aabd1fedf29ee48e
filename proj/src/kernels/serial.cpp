// Single-threaded reference kernels. Written for clarity, not speed; they are
// the baseline the parallel kernels are checked and benchmarked against.

#include <algorithm>
#include <cmath>
#include <vector>

#include "slsnet/kernels.hpp"

namespace slsnet::kernels::serial {

namespace {
using idx = std::ptrdiff_t;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const real* a,
          std::size_t lda, const real* b, std::size_t ldb, real* c, std::size_t ldc,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      acc_t s = accumulate ? acc_t(c[i * ldc + j]) : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const acc_t av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const acc_t bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        s += av * bv;
      }
      c[i * ldc + j] = static_cast<real>(s);
    }
  }
}

void conv2d_forward(const ConvGeom& g, std::span<const real> x, std::span<const real> weight,
                    std::span<const real> bias, std::span<real> y) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_c; ++o)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          acc_t s = bias.empty() ? 0.0 : acc_t(bias[o]);
          for (std::size_t c = 0; c < g.in_c; ++c)
            for (std::size_t ki = 0; ki < g.kh; ++ki)
              for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const idx iy = idx(oy * g.stride + ki) - idx(g.pad_h);
                const idx ix = idx(ox * g.stride + kj) - idx(g.pad_w);
                if (iy < 0 || ix < 0 || iy >= idx(g.in_h) || ix >= idx(g.in_w)) continue;
                s += acc_t(x[((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix]) *
                     weight[((o * g.in_c + c) * g.kh + ki) * g.kw + kj];
              }
          y[((n * g.out_c + o) * g.out_h + oy) * g.out_w + ox] = static_cast<real>(s);
        }
}

void conv2d_backward(const ConvGeom& g, std::span<const real> x, std::span<const real> weight,
                     std::span<const real> dy, std::span<real> dx, std::span<real> dweight,
                     std::span<real> dbias) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_c; ++o)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const real gv = dy[((n * g.out_c + o) * g.out_h + oy) * g.out_w + ox];
          if (!dbias.empty()) dbias[o] += gv;
          for (std::size_t c = 0; c < g.in_c; ++c)
            for (std::size_t ki = 0; ki < g.kh; ++ki)
              for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const idx iy = idx(oy * g.stride + ki) - idx(g.pad_h);
                const idx ix = idx(ox * g.stride + kj) - idx(g.pad_w);
                if (iy < 0 || ix < 0 || iy >= idx(g.in_h) || ix >= idx(g.in_w)) continue;
                const std::size_t xi = ((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix;
                const std::size_t wi = ((o * g.in_c + c) * g.kh + ki) * g.kw + kj;
                if (!dx.empty()) dx[xi] += gv * weight[wi];
                if (!dweight.empty()) dweight[wi] += gv * x[xi];
              }
        }
}

void conv_transpose2d_forward(const ConvGeom& g, std::span<const real> x,
                              std::span<const real> weight, std::span<const real> bias,
                              std::span<real> y) {
  std::vector<acc_t> acc(g.batch * g.out_c * g.out_h * g.out_w, 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_c; ++c)
      for (std::size_t iy = 0; iy < g.in_h; ++iy)
        for (std::size_t ix = 0; ix < g.in_w; ++ix) {
          const acc_t xv = x[((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix];
          for (std::size_t o = 0; o < g.out_c; ++o)
            for (std::size_t ki = 0; ki < g.kh; ++ki)
              for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const idx oy = idx(iy * g.stride + ki) - idx(g.pad_h);
                const idx ox = idx(ix * g.stride + kj) - idx(g.pad_w);
                if (oy < 0 || ox < 0 || oy >= idx(g.out_h) || ox >= idx(g.out_w)) continue;
                acc[((n * g.out_c + o) * g.out_h + oy) * g.out_w + ox] +=
                    xv * weight[((c * g.out_c + o) * g.kh + ki) * g.kw + kj];
              }
        }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const std::size_t o = (i / (g.out_h * g.out_w)) % g.out_c;
    y[i] = static_cast<real>(acc[i] + (bias.empty() ? 0.0 : acc_t(bias[o])));
  }
}

void conv_transpose2d_backward(const ConvGeom& g, std::span<const real> x,
                               std::span<const real> weight, std::span<const real> dy,
                               std::span<real> dx, std::span<real> dweight, std::span<real> dbias) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_c; ++c)
      for (std::size_t iy = 0; iy < g.in_h; ++iy)
        for (std::size_t ix = 0; ix < g.in_w; ++ix) {
          const std::size_t xi = ((n * g.in_c + c) * g.in_h + iy) * g.in_w + ix;
          for (std::size_t o = 0; o < g.out_c; ++o)
            for (std::size_t ki = 0; ki < g.kh; ++ki)
              for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const idx oy = idx(iy * g.stride + ki) - idx(g.pad_h);
                const idx ox = idx(ix * g.stride + kj) - idx(g.pad_w);
                if (oy < 0 || ox < 0 || oy >= idx(g.out_h) || ox >= idx(g.out_w)) continue;
                const real gv = dy[((n * g.out_c + o) * g.out_h + oy) * g.out_w + ox];
                const std::size_t wi = ((c * g.out_c + o) * g.kh + ki) * g.kw + kj;
                if (!dx.empty()) dx[xi] += gv * weight[wi];
                if (!dweight.empty()) dweight[wi] += gv * x[xi];
              }
        }
  if (!dbias.empty()) {
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t o = 0; o < g.out_c; ++o)
        for (std::size_t i = 0; i < g.out_h * g.out_w; ++i)
          dbias[o] += dy[(n * g.out_c + o) * g.out_h * g.out_w + i];
  }
}

void maxpool2_forward(std::size_t planes, std::size_t h, std::size_t w, std::span<const real> x,
                      std::span<real> y, std::span<std::uint32_t> argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = 0;
        bool first = true;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t at = (2 * oy + dy) * w + 2 * ox + dx;
            if (first || x[p * h * w + at] > x[p * h * w + best]) best = at;
            first = false;
          }
        y[(p * oh + oy) * ow + ox] = x[p * h * w + best];
        argmax[(p * oh + oy) * ow + ox] = static_cast<std::uint32_t>(best);
      }
}

void bilinear_forward(std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                      std::size_t out_w, std::span<const real> x, std::span<real> y) {
  auto coord = [](std::size_t i, std::size_t in, std::size_t out) {
    double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / out - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double sy = coord(oy, in_h, out_h), sx = coord(ox, in_w, out_w);
        const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1), x1 = std::min(x0 + 1, in_w - 1);
        const double fy = sy - y0, fx = sx - x0;
        auto px = [&](std::size_t r, std::size_t c) { return double(x[(p * in_h + r) * in_w + c]); };
        y[(p * out_h + oy) * out_w + ox] = static_cast<real>(
            (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
            fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1)));
      }
}

void softmax_rows_forward(std::size_t rows, std::size_t cols, std::span<const real> x,
                          std::span<real> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const real* src = x.data() + r * cols;
    const real mx = *std::max_element(src, src + cols);
    acc_t sum = 0;
    for (std::size_t i = 0; i < cols; ++i) sum += std::exp(acc_t(src[i]) - mx);
    for (std::size_t i = 0; i < cols; ++i)
      y[r * cols + i] = static_cast<real>(std::exp(acc_t(src[i]) - mx) / sum);
  }
}

void attention_forward(std::size_t dim, std::size_t dim_v, std::size_t n_dst, std::size_t n_src,
                       const real* q, const real* k, const real* v, real* out) {
  std::vector<acc_t> logits(n_src);
  for (std::size_t j = 0; j < n_dst; ++j) {
    acc_t mx = -INFINITY;
    for (std::size_t i = 0; i < n_src; ++i) {
      acc_t s = 0;
      for (std::size_t d = 0; d < dim; ++d) s += acc_t(k[d * n_src + i]) * q[d * n_dst + j];
      logits[i] = s;
      mx = std::max(mx, s);
    }
    acc_t sum = 0;
    for (auto& l : logits) sum += (l = std::exp(l - mx));
    for (std::size_t c = 0; c < dim_v; ++c) {
      acc_t s = 0;
      for (std::size_t i = 0; i < n_src; ++i) s += logits[i] / sum * v[c * n_src + i];
      out[c * n_dst + j] = static_cast<real>(s);
    }
  }
}

}  // namespace slsnet::kernels::serial
