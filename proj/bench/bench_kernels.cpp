// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <vector>

#include "hdet/kernels.hpp"
#include "hdet/rng.hpp"

namespace k = hdet::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  hdet::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// (m, n, k) of the detector's convolutions at 96 px: out channels x positions x patch
template <auto Gemm>
void BM_gemm_nn(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * kk, 1), b = random_values(kk * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Gemm(m, n, kk, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * m * n * kk));
}

template <auto Gemm>
void BM_gemm_nt(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * kk, 1), b = random_values(n * kk, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Gemm(m, n, kk, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * m * n * kk));
}

template <auto Im2col>
void BM_im2col(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const k::ConvGeometry g{c, hw, hw, 3, 3, 1, 1};
  const auto in = random_values(c * hw * hw, 3);
  std::vector<double> col(g.patch() * g.positions());
  for (auto _ : state) {
    Im2col(g, in, col);
    benchmark::DoNotOptimize(col.data());
  }
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 96 * 96, 27})->Args({32, 48 * 48, 144})->Args({64, 24 * 24, 288})->Args({64, 12 * 12, 576});
}

// weight-gradient products: out channels x patch x positions
void grad_shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 27, 96 * 96})->Args({32, 144, 48 * 48})->Args({64, 288, 24 * 24})->Args({64, 576, 12 * 12});
}

void im2col_shapes(benchmark::internal::Benchmark* b) { b->Args({3, 96})->Args({16, 48})->Args({32, 24})->Args({64, 12}); }

}  // namespace

BENCHMARK(BM_gemm_nn<k::serial::gemm_nn>)->Name("gemm_nn/serial")->Apply(conv_shapes);
BENCHMARK(BM_gemm_nn<k::omp::gemm_nn>)->Name("gemm_nn/omp")->Apply(conv_shapes);
BENCHMARK(BM_gemm_nt<k::serial::gemm_nt>)->Name("gemm_nt/serial")->Apply(grad_shapes);
BENCHMARK(BM_gemm_nt<k::omp::gemm_nt>)->Name("gemm_nt/omp")->Apply(grad_shapes);
BENCHMARK(BM_im2col<k::serial::im2col>)->Name("im2col/serial")->Apply(im2col_shapes);
BENCHMARK(BM_im2col<k::omp::im2col>)->Name("im2col/omp")->Apply(im2col_shapes);

BENCHMARK_MAIN();
