#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "slsnet/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slsnet::kernels {

namespace {

using idx = std::ptrdiff_t;

constexpr std::size_t kTileM = 64;
constexpr std::size_t kTileN = 256;
constexpr std::size_t kTileK = 256;
constexpr std::size_t kAttentionRows = 64;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void add_bias(std::size_t channels, std::size_t plane, std::span<const real> bias, real* y) {
  if (bias.empty()) return;
#pragma omp parallel for schedule(static)
  for (idx o = 0; o < static_cast<idx>(channels); ++o) {
    real* row = y + o * plane;
    const real b = bias[o];
#pragma omp simd
    for (std::size_t i = 0; i < plane; ++i) row[i] += b;
  }
}

void accumulate_bias_grad(std::size_t channels, std::size_t plane, const real* dy,
                          std::span<real> dbias) {
  if (dbias.empty()) return;
  for (std::size_t o = 0; o < channels; ++o) {
    const real* row = dy + o * plane;
    acc_t s = 0;
#pragma omp simd reduction(+ : s)
    for (std::size_t i = 0; i < plane; ++i) s += row[i];
    dbias[o] += static_cast<real>(s);
  }
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const real* a,
          std::size_t lda, const real* b, std::size_t ldb, real* c, std::size_t ldc,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  if (trans_a && trans_b) {
    // Rare path: materialise op(B) and fall through to TN.
    std::vector<real> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * ldb + p];
    gemm(true, false, m, n, k, a, lda, bt.data(), n, c, ldc, accumulate);
    return;
  }

  const std::size_t tiles_n = ceil_div(n, kTileN);
  const idx tiles = static_cast<idx>(ceil_div(m, kTileM) * tiles_n);

#pragma omp parallel
  {
    thread_local std::vector<acc_t> acc(kTileM * kTileN);
#pragma omp for schedule(static)
    for (idx t = 0; t < tiles; ++t) {
      const std::size_t i0 = (static_cast<std::size_t>(t) / tiles_n) * kTileM;
      const std::size_t j0 = (static_cast<std::size_t>(t) % tiles_n) * kTileN;
      const std::size_t mi = std::min(kTileM, m - i0);
      const std::size_t nj = std::min(kTileN, n - j0);
      std::fill_n(acc.begin(), mi * nj, acc_t(0));

      for (std::size_t p0 = 0; p0 < k; p0 += kTileK) {
        const std::size_t pk = std::min(kTileK, k - p0);
        if (!trans_b) {
          for (std::size_t i = 0; i < mi; ++i) {
            acc_t* crow = acc.data() + i * nj;
            for (std::size_t p = p0; p < p0 + pk; ++p) {
              const acc_t av = trans_a ? a[p * lda + i0 + i] : a[(i0 + i) * lda + p];
              if (av == 0) continue;
              const real* brow = b + p * ldb + j0;
#pragma omp simd
              for (std::size_t j = 0; j < nj; ++j) crow[j] += av * brow[j];
            }
          }
        } else {
          // trans_b (and not trans_a): inner products of contiguous rows.
          for (std::size_t i = 0; i < mi; ++i) {
            const real* arow = a + (i0 + i) * lda + p0;
            acc_t* crow = acc.data() + i * nj;
            for (std::size_t j = 0; j < nj; ++j) {
              const real* brow = b + (j0 + j) * ldb + p0;
              acc_t s = 0;
#pragma omp simd reduction(+ : s)
              for (std::size_t p = 0; p < pk; ++p) s += acc_t(arow[p]) * brow[p];
              crow[j] += s;
            }
          }
        }
      }

      for (std::size_t i = 0; i < mi; ++i) {
        real* out = c + (i0 + i) * ldc + j0;
        const acc_t* crow = acc.data() + i * nj;
        if (accumulate) {
          for (std::size_t j = 0; j < nj; ++j) out[j] = static_cast<real>(out[j] + crow[j]);
        } else {
          for (std::size_t j = 0; j < nj; ++j) out[j] = static_cast<real>(crow[j]);
        }
      }
    }
  }
}

void im2col(const real* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad_h, std::size_t pad_w,
            std::size_t out_h, std::size_t out_w, real* col) {
  const std::size_t plane = out_h * out_w;
#pragma omp parallel for schedule(static)
  for (idx c = 0; c < static_cast<idx>(channels); ++c) {
    const real* src = img + c * h * w;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        real* dst = col + ((c * kh + ki) * kw + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const idx iy = static_cast<idx>(oy * stride + ki) - static_cast<idx>(pad_h);
          real* drow = dst + oy * out_w;
          if (iy < 0 || iy >= static_cast<idx>(h)) {
            std::fill(drow, drow + out_w, real(0));
            continue;
          }
          const real* srow = src + iy * w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const idx ix = static_cast<idx>(ox * stride + kj) - static_cast<idx>(pad_w);
            drow[ox] = (ix >= 0 && ix < static_cast<idx>(w)) ? srow[ix] : real(0);
          }
        }
      }
    }
  }
}

void col2im(const real* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad_h, std::size_t pad_w,
            std::size_t out_h, std::size_t out_w, real* img) {
  const std::size_t plane = out_h * out_w;
#pragma omp parallel for schedule(static)
  for (idx c = 0; c < static_cast<idx>(channels); ++c) {
    real* dst = img + c * h * w;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const real* src = col + ((c * kh + ki) * kw + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const idx iy = static_cast<idx>(oy * stride + ki) - static_cast<idx>(pad_h);
          if (iy < 0 || iy >= static_cast<idx>(h)) continue;
          real* drow = dst + iy * w;
          const real* srow = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const idx ix = static_cast<idx>(ox * stride + kj) - static_cast<idx>(pad_w);
            if (ix >= 0 && ix < static_cast<idx>(w)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

namespace {
bool is_pointwise(const ConvGeom& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad_h == 0 && g.pad_w == 0;
}
}  // namespace

void conv2d_forward(const ConvGeom& g, std::span<const real> x, std::span<const real> weight,
                    std::span<const real> bias, std::span<real> y) {
  const std::size_t in_item = g.in_c * g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t patch = g.in_c * g.kh * g.kw;
  const bool direct = is_pointwise(g);
  std::vector<real> col(direct ? 0 : patch * out_plane);

  for (std::size_t n = 0; n < g.batch; ++n) {
    const real* xn = x.data() + n * in_item;
    real* yn = y.data() + n * g.out_c * out_plane;
    const real* cols = xn;
    if (!direct) {
      im2col(xn, g.in_c, g.in_h, g.in_w, g.kh, g.kw, g.stride, g.pad_h, g.pad_w, g.out_h, g.out_w,
             col.data());
      cols = col.data();
    }
    gemm(false, false, g.out_c, out_plane, patch, weight.data(), patch, cols, out_plane, yn,
         out_plane, false);
    add_bias(g.out_c, out_plane, bias, yn);
  }
}

void conv2d_backward(const ConvGeom& g, std::span<const real> x, std::span<const real> weight,
                     std::span<const real> dy, std::span<real> dx, std::span<real> dweight,
                     std::span<real> dbias) {
  const std::size_t in_item = g.in_c * g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t patch = g.in_c * g.kh * g.kw;
  const bool direct = is_pointwise(g);
  std::vector<real> col(direct || dweight.empty() ? 0 : patch * out_plane);
  std::vector<real> dcol(dx.empty() ? 0 : patch * out_plane);

  for (std::size_t n = 0; n < g.batch; ++n) {
    const real* xn = x.data() + n * in_item;
    const real* dyn = dy.data() + n * g.out_c * out_plane;
    if (!dweight.empty()) {
      const real* cols = xn;
      if (!direct) {
        im2col(xn, g.in_c, g.in_h, g.in_w, g.kh, g.kw, g.stride, g.pad_h, g.pad_w, g.out_h,
               g.out_w, col.data());
        cols = col.data();
      }
      gemm(false, true, g.out_c, patch, out_plane, dyn, out_plane, cols, out_plane,
           dweight.data(), patch, true);
    }
    accumulate_bias_grad(g.out_c, out_plane, dyn, dbias);
    if (!dx.empty()) {
      real* dxn = dx.data() + n * in_item;
      if (direct) {
        gemm(true, false, patch, out_plane, g.out_c, weight.data(), patch, dyn, out_plane, dxn,
             out_plane, true);
      } else {
        gemm(true, false, patch, out_plane, g.out_c, weight.data(), patch, dyn, out_plane,
             dcol.data(), out_plane, false);
        col2im(dcol.data(), g.in_c, g.in_h, g.in_w, g.kh, g.kw, g.stride, g.pad_h, g.pad_w,
               g.out_h, g.out_w, dxn);
      }
    }
  }
}

void conv_transpose2d_forward(const ConvGeom& g, std::span<const real> x,
                              std::span<const real> weight, std::span<const real> bias,
                              std::span<real> y) {
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_item = g.out_c * g.out_h * g.out_w;
  const std::size_t patch = g.out_c * g.kh * g.kw;
  std::vector<real> col(patch * in_plane);

  for (std::size_t n = 0; n < g.batch; ++n) {
    const real* xn = x.data() + n * g.in_c * in_plane;
    real* yn = y.data() + n * out_item;
    gemm(true, false, patch, in_plane, g.in_c, weight.data(), patch, xn, in_plane, col.data(),
         in_plane, false);
    std::fill(yn, yn + out_item, real(0));
    col2im(col.data(), g.out_c, g.out_h, g.out_w, g.kh, g.kw, g.stride, g.pad_h, g.pad_w, g.in_h,
           g.in_w, yn);
    add_bias(g.out_c, g.out_h * g.out_w, bias, yn);
  }
}

void conv_transpose2d_backward(const ConvGeom& g, std::span<const real> x,
                               std::span<const real> weight, std::span<const real> dy,
                               std::span<real> dx, std::span<real> dweight, std::span<real> dbias) {
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t patch = g.out_c * g.kh * g.kw;
  std::vector<real> dcol(patch * in_plane);

  for (std::size_t n = 0; n < g.batch; ++n) {
    const real* xn = x.data() + n * g.in_c * in_plane;
    const real* dyn = dy.data() + n * g.out_c * out_plane;
    im2col(dyn, g.out_c, g.out_h, g.out_w, g.kh, g.kw, g.stride, g.pad_h, g.pad_w, g.in_h, g.in_w,
           dcol.data());
    if (!dx.empty()) {
      gemm(false, false, g.in_c, in_plane, patch, weight.data(), patch, dcol.data(), in_plane,
           dx.data() + n * g.in_c * in_plane, in_plane, true);
    }
    if (!dweight.empty()) {
      gemm(false, true, g.in_c, patch, in_plane, xn, in_plane, dcol.data(), in_plane,
           dweight.data(), patch, true);
    }
    accumulate_bias_grad(g.out_c, out_plane, dyn, dbias);
  }
}

void maxpool2_forward(std::size_t planes, std::size_t h, std::size_t w, std::span<const real> x,
                      std::span<real> y, std::span<std::uint32_t> argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(planes); ++p) {
    const real* src = x.data() + p * h * w;
    real* dst = y.data() + p * oh * ow;
    std::uint32_t* arg = argmax.data() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t c : cand)
          if (src[c] > src[best]) best = c;
        dst[oy * ow + ox] = src[best];
        arg[oy * ow + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void maxpool2_backward(std::size_t planes, std::size_t h, std::size_t w,
                       std::span<const real> dy, std::span<const std::uint32_t> argmax,
                       std::span<real> dx) {
  const std::size_t out_plane = (h / 2) * (w / 2);
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(planes); ++p) {
    real* dst = dx.data() + p * h * w;
    const real* g = dy.data() + p * out_plane;
    const std::uint32_t* arg = argmax.data() + p * out_plane;
    for (std::size_t i = 0; i < out_plane; ++i) dst[arg[i]] += g[i];
  }
}

namespace {

struct Tap {
  std::size_t lo, hi;
  real frac;  // weight of hi
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, static_cast<real>(src - static_cast<double>(lo))};
  }
  return taps;
}

}  // namespace

void bilinear_forward(std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                      std::size_t out_w, std::span<const real> x, std::span<real> y) {
  const auto ty = bilinear_taps(in_h, out_h);
  const auto tx = bilinear_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(planes); ++p) {
    const real* src = x.data() + p * in_h * in_w;
    real* dst = y.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[oy];
      const real* r0 = src + a.lo * in_w;
      const real* r1 = src + a.hi * in_w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[ox];
        const acc_t top = acc_t(r0[b.lo]) * (1 - b.frac) + acc_t(r0[b.hi]) * b.frac;
        const acc_t bot = acc_t(r1[b.lo]) * (1 - b.frac) + acc_t(r1[b.hi]) * b.frac;
        dst[oy * out_w + ox] = static_cast<real>(top * (1 - a.frac) + bot * a.frac);
      }
    }
  }
}

void bilinear_backward(std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                       std::size_t out_w, std::span<const real> dy, std::span<real> dx) {
  const auto ty = bilinear_taps(in_h, out_h);
  const auto tx = bilinear_taps(in_w, out_w);
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(planes); ++p) {
    const real* g = dy.data() + p * out_h * out_w;
    real* dst = dx.data() + p * in_h * in_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[oy];
      real* r0 = dst + a.lo * in_w;
      real* r1 = dst + a.hi * in_w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[ox];
        const real v = g[oy * out_w + ox];
        const real top = v * (1 - a.frac);
        const real bot = v * a.frac;
        r0[b.lo] += top * (1 - b.frac);
        r0[b.hi] += top * b.frac;
        r1[b.lo] += bot * (1 - b.frac);
        r1[b.hi] += bot * b.frac;
      }
    }
  }
}

void softmax_rows_forward(std::size_t rows, std::size_t cols, std::span<const real> x,
                          std::span<real> y) {
  // In-place safe (x and y may alias).
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    const real* src = x.data() + r * cols;
    real* dst = y.data() + r * cols;
    real mx = src[0];
    for (std::size_t i = 1; i < cols; ++i) mx = std::max(mx, src[i]);
    acc_t sum = 0;
    for (std::size_t i = 0; i < cols; ++i) {
      const acc_t e = std::exp(acc_t(src[i]) - mx);
      dst[i] = static_cast<real>(e);
      sum += e;
    }
    const acc_t inv = 1.0 / sum;
#pragma omp simd
    for (std::size_t i = 0; i < cols; ++i) dst[i] = static_cast<real>(dst[i] * inv);
  }
}

void softmax_rows_backward(std::size_t rows, std::size_t cols, std::span<const real> y,
                           std::span<const real> dy, std::span<real> dx) {
  // dx may alias dy; dx is overwritten, not accumulated.
#pragma omp parallel for schedule(static)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    const real* yr = y.data() + r * cols;
    const real* gr = dy.data() + r * cols;
    real* out = dx.data() + r * cols;
    acc_t dot = 0;
#pragma omp simd reduction(+ : dot)
    for (std::size_t i = 0; i < cols; ++i) dot += acc_t(yr[i]) * gr[i];
    for (std::size_t i = 0; i < cols; ++i) out[i] = static_cast<real>(yr[i] * (gr[i] - dot));
  }
}

void attention_forward(std::size_t dim, std::size_t dim_v, std::size_t n_dst, std::size_t n_src,
                       const real* q, const real* k, const real* v, real* out,
                       std::span<real> s) {
  std::vector<real> scratch(s.empty() ? kAttentionRows * n_src : 0);
  for (std::size_t j0 = 0; j0 < n_dst; j0 += kAttentionRows) {
    const std::size_t rows = std::min(kAttentionRows, n_dst - j0);
    real* block = s.empty() ? scratch.data() : s.data() + j0 * n_src;
    gemm(true, false, rows, n_src, dim, q + j0, n_dst, k, n_src, block, n_src, false);
    std::span<real> bs(block, rows * n_src);
    softmax_rows_forward(rows, n_src, bs, bs);
    gemm(false, true, dim_v, rows, n_src, v, n_src, block, n_src, out + j0, n_dst, false);
  }
}

void attention_backward(std::size_t dim, std::size_t dim_v, std::size_t n_dst, std::size_t n_src,
                        const real* q, const real* k, const real* v, std::span<const real> s,
                        const real* dout, real* dq, real* dk, real* dv) {
  std::vector<real> ds(n_dst * n_src);
  gemm(true, false, n_dst, n_src, dim_v, dout, n_dst, v, n_src, ds.data(), n_src, false);
  if (dv) gemm(false, false, dim_v, n_src, n_dst, dout, n_dst, s.data(), n_src, dv, n_src, true);
  softmax_rows_backward(n_dst, n_src, s, ds, ds);
  if (dq) gemm(false, true, dim, n_dst, n_src, k, n_src, ds.data(), n_src, dq, n_dst, true);
  if (dk) gemm(false, false, dim, n_src, n_dst, q, n_dst, ds.data(), n_src, dk, n_src, true);
}

}  // namespace slsnet::kernels
