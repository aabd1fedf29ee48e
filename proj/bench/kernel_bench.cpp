// Serial reference kernels against the blocked/parallel ones.
//
//   ./kernel_bench --benchmark_filter=Gemm
//
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "slsnet/kernels.hpp"

namespace kn = slsnet::kernels;
using slsnet::real;

namespace {

std::vector<real> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<real> v(n);
  for (auto& x : v) x = static_cast<real>(dist(rng));
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1);
  const auto b = random_vector(n * n, 2);
  std::vector<real> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) kn::gemm(false, false, n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    else kn::serial::gemm(false, false, n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

kn::ConvGeom conv_geom(std::size_t size, std::size_t channels) {
  kn::ConvGeom g;
  g.batch = 1;
  g.in_c = channels;
  g.in_h = g.in_w = size;
  g.out_c = channels;
  g.out_h = g.out_w = size;
  g.kh = g.kw = 3;
  g.pad_h = g.pad_w = 1;
  return g;
}

template <bool Parallel>
void BM_Conv3x3(benchmark::State& state) {
  const auto g = conv_geom(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto x = random_vector(g.in_c * g.in_h * g.in_w, 3);
  const auto w = random_vector(g.out_c * g.in_c * 9, 4);
  const auto b = random_vector(g.out_c, 5);
  std::vector<real> y(g.out_c * g.out_h * g.out_w);
  for (auto _ : state) {
    if constexpr (Parallel) kn::conv2d_forward(g, x, w, b, y);
    else kn::serial::conv2d_forward(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto dim = static_cast<std::size_t>(state.range(1));
  const std::size_t n = side * side;
  const auto q = random_vector(dim * n, 6);
  const auto k = random_vector(dim * n, 7);
  const auto v = random_vector(dim * n, 8);
  std::vector<real> out(dim * n);
  for (auto _ : state) {
    if constexpr (Parallel) kn::attention_forward(dim, dim, n, n, q.data(), k.data(), v.data(), out.data(), {});
    else kn::serial::attention_forward(dim, dim, n, n, q.data(), k.data(), v.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("Gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("Gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv3x3<false>)->Name("Conv3x3/serial")->Args({64, 16})->Args({32, 64});
BENCHMARK(BM_Conv3x3<true>)->Name("Conv3x3/parallel")->Args({64, 16})->Args({32, 64});
BENCHMARK(BM_Attention<false>)->Name("Attention/serial")->Args({16, 32})->Args({32, 8});
BENCHMARK(BM_Attention<true>)->Name("Attention/parallel")->Args({16, 32})->Args({32, 8});

BENCHMARK_MAIN();
