#include <doctest.h>

#include <vector>

#include <omp.h>

#include "hdet/kernels.hpp"
#include "hdet/rng.hpp"

using namespace hdet;
namespace k = hdet::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst <= tol);
}

struct Dims {
  std::size_t m, n, k;
};

// ragged sizes hit every edge path of the blocked kernels
const Dims kDims[] = {{1, 1, 1}, {7, 5, 3}, {6, 16, 9}, {13, 33, 17}, {64, 96, 27}, {5, 200, 64}};

}  // namespace

TEST_CASE("omp gemm matches the serial reference") {
  for (const auto& d : kDims) {
    CAPTURE(d.m);
    CAPTURE(d.n);
    CAPTURE(d.k);
    const auto a = random_values(d.m * d.k, 1), b = random_values(d.k * d.n, 2);
    const auto bt = random_values(d.n * d.k, 3), at = random_values(d.k * d.m, 4);
    const auto c0 = random_values(d.m * d.n, 5);

    auto s = c0, o = c0;
    k::serial::gemm_nn(d.m, d.n, d.k, a, b, s);
    k::omp::gemm_nn(d.m, d.n, d.k, a, b, o);
    check_close(s, o, 1e-12);

    s = c0, o = c0;
    k::serial::gemm_nt(d.m, d.n, d.k, a, bt, s);
    k::omp::gemm_nt(d.m, d.n, d.k, a, bt, o);
    check_close(s, o, 1e-12);

    s = c0, o = c0;
    k::serial::gemm_tn(d.m, d.n, d.k, at, b, s);
    k::omp::gemm_tn(d.m, d.n, d.k, at, b, o);
    check_close(s, o, 1e-12);
  }
}

TEST_CASE("omp gemm is identical across thread counts") {
  const std::size_t m = 37, n = 70, kk = 45;
  const auto a = random_values(m * kk, 6), b = random_values(kk * n, 7);
  const int saved = omp_get_max_threads();
  std::vector<double> ref(m * n, 0.0);
  omp_set_num_threads(1);
  k::omp::gemm_nn(m, n, kk, a, b, ref);
  for (int threads : {2, 3, 4}) {
    omp_set_num_threads(threads);
    std::vector<double> c(m * n, 0.0);
    k::omp::gemm_nn(m, n, kk, a, b, c);
    CHECK(c == ref);
  }
  omp_set_num_threads(saved);
}

TEST_CASE("omp im2col, col2im and maxpool2 match the serial reference") {
  for (const auto& [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {1, 0}, {2, 0}, {2, 1}}) {
    k::ConvGeometry g{3, 9, 9, 3, 3, stride, pad};
    if ((g.height + 2 * pad - g.kernel_h) % stride != 0) continue;
    const auto in = random_values(g.channels * g.height * g.width, 8);
    std::vector<double> cs(g.patch() * g.positions()), co(cs.size());
    k::serial::im2col(g, in, cs);
    k::omp::im2col(g, in, co);
    CHECK(cs == co);

    const auto col = random_values(cs.size(), 9);
    std::vector<double> is(in.size(), 0.0), io(in.size(), 0.0);
    k::serial::col2im(g, col, is);
    k::omp::col2im(g, col, io);
    check_close(is, io, 1e-12);
  }

  const std::size_t c = 4, h = 10, w = 6;
  const auto in = random_values(c * h * w, 10);
  std::vector<double> os(c * h * w / 4), oo(os.size());
  std::vector<std::size_t> as(os.size()), ao(os.size());
  k::serial::maxpool2(c, h, w, in, os, as);
  k::omp::maxpool2(c, h, w, in, oo, ao);
  CHECK(os == oo);
  CHECK(as == ao);
}
