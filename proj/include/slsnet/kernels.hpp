#pragma once

// Raw numeric kernels behind the autodiff ops.
//
// `slsnet::kernels` holds the production kernels: blocked, OpenMP-parallel
// where the loop nest has independent outputs, double accumulation.
// `slsnet::kernels::serial` holds straightforward single-threaded reference
// versions of the same contracts. Tests compare the two; bench/ times them.
//
// All buffers are dense row-major. Every parallel loop writes disjoint
// outputs and reduces in a fixed order, so results do not depend on the
// thread count.

#include <cstddef>
#include <cstdint>
#include <span>

#include "slsnet/real.hpp"

namespace slsnet::kernels {

/// Geometry shared by conv2d and conv_transpose2d: `in_*` describes the
/// operation's input and `out_*` its output in both cases.
struct ConvGeom {
  std::size_t batch = 1;
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_c = 0, out_h = 0, out_w = 0;
  std::size_t kh = 1, kw = 1;
  std::size_t stride = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

/// Number of threads the parallel kernels may use.
int max_threads();
void set_threads(int n);

/// C = op(A) * op(B) (+ C when accumulate). op(A) is M x K, op(B) is K x N.
/// lda/ldb/ldc are row strides of the stored (untransposed) matrices.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const real* a,
          std::size_t lda, const real* b, std::size_t ldb, real* c, std::size_t ldc,
          bool accumulate);

void im2col(const real* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad_h, std::size_t pad_w,
            std::size_t out_h, std::size_t out_w, real* col);
/// Accumulates into img.
void col2im(const real* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad_h, std::size_t pad_w,
            std::size_t out_h, std::size_t out_w, real* img);

// weight: (out_c, in_c, kh, kw); bias may be empty.
void conv2d_forward(const ConvGeom& g, std::span<const real> x, std::span<const real> weight,
                    std::span<const real> bias, std::span<real> y);
// Any of dx / dweight / dbias may be empty to skip. Results accumulate.
void conv2d_backward(const ConvGeom& g, std::span<const real> x, std::span<const real> weight,
                     std::span<const real> dy, std::span<real> dx, std::span<real> dweight,
                     std::span<real> dbias);

// Transposed conv. x: (batch, in_c, in_h, in_w) is the *input* here and
// y: (batch, out_c, out_h, out_w) the output; weight: (in_c, out_c, kh, kw).
void conv_transpose2d_forward(const ConvGeom& g, std::span<const real> x,
                              std::span<const real> weight, std::span<const real> bias,
                              std::span<real> y);
void conv_transpose2d_backward(const ConvGeom& g, std::span<const real> x,
                               std::span<const real> weight, std::span<const real> dy,
                               std::span<real> dx, std::span<real> dweight, std::span<real> dbias);

// 2x2 non-overlapping max pooling over `planes` planes of h x w.
// argmax receives the flat in-plane index of the winner (first in scan order on ties).
void maxpool2_forward(std::size_t planes, std::size_t h, std::size_t w, std::span<const real> x,
                      std::span<real> y, std::span<std::uint32_t> argmax);
void maxpool2_backward(std::size_t planes, std::size_t h, std::size_t w,
                       std::span<const real> dy, std::span<const std::uint32_t> argmax,
                       std::span<real> dx);

// Half-pixel-centre (align_corners = false) bilinear resampling.
void bilinear_forward(std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                      std::size_t out_w, std::span<const real> x, std::span<real> y);
void bilinear_backward(std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                       std::size_t out_w, std::span<const real> dy, std::span<real> dx);

void softmax_rows_forward(std::size_t rows, std::size_t cols, std::span<const real> x,
                          std::span<real> y);
void softmax_rows_backward(std::size_t rows, std::size_t cols, std::span<const real> y,
                           std::span<const real> dy, std::span<real> dx);

/// Feature-major softmax attention for one batch item.
///   q: (dim, n_dst), k: (dim, n_src), v: (dim_v, n_src), out: (dim_v, n_dst)
///   s[j][i] = softmax_i(k_i . q_j),  out[:, j] = sum_i s[j][i] v[:, i]
/// When `s` is non-empty the full (n_dst, n_src) map is stored; otherwise rows
/// are produced in blocks and discarded.
void attention_forward(std::size_t dim, std::size_t dim_v, std::size_t n_dst, std::size_t n_src,
                       const real* q, const real* k, const real* v, real* out,
                       std::span<real> s);
/// Gradients accumulate into dq, dk, dv. `s` is the map stored by forward.
void attention_backward(std::size_t dim, std::size_t dim_v, std::size_t n_dst, std::size_t n_src,
                        const real* q, const real* k, const real* v, std::span<const real> s,
                        const real* dout, real* dq, real* dk, real* dv);

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const real* a,
          std::size_t lda, const real* b, std::size_t ldb, real* c, std::size_t ldc,
          bool accumulate);
void conv2d_forward(const ConvGeom& g, std::span<const real> x, std::span<const real> weight,
                    std::span<const real> bias, std::span<real> y);
void conv2d_backward(const ConvGeom& g, std::span<const real> x, std::span<const real> weight,
                     std::span<const real> dy, std::span<real> dx, std::span<real> dweight,
                     std::span<real> dbias);
void conv_transpose2d_forward(const ConvGeom& g, std::span<const real> x,
                              std::span<const real> weight, std::span<const real> bias,
                              std::span<real> y);
void conv_transpose2d_backward(const ConvGeom& g, std::span<const real> x,
                               std::span<const real> weight, std::span<const real> dy,
                               std::span<real> dx, std::span<real> dweight, std::span<real> dbias);
void maxpool2_forward(std::size_t planes, std::size_t h, std::size_t w, std::span<const real> x,
                      std::span<real> y, std::span<std::uint32_t> argmax);
void bilinear_forward(std::size_t planes, std::size_t in_h, std::size_t in_w, std::size_t out_h,
                      std::size_t out_w, std::span<const real> x, std::span<real> y);
void softmax_rows_forward(std::size_t rows, std::size_t cols, std::span<const real> x,
                          std::span<real> y);
void attention_forward(std::size_t dim, std::size_t dim_v, std::size_t n_dst, std::size_t n_src,
                       const real* q, const real* k, const real* v, real* out);

}  // namespace serial
}  // namespace slsnet::kernels
