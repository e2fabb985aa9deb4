#include "hdet/kernels.hpp"

#include <algorithm>
#include <vector>

namespace hdet::kernels::omp {

namespace {

// Register tile: kMr rows of C by kNr columns, depth loop innermost-outer.
constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 16;

// C[i0.., j0..] += op(A) * Bpanel where bpanel is a packed [k][kNr] panel and
// a_at(i, p) is the (row, depth) coefficient of op(A). Each output keeps a
// single accumulator summed over p ascending.
template <std::size_t R, typename AAt>
inline void micro_tile(std::size_t i0, std::size_t j0, std::size_t cols, std::size_t n,
                       std::size_t k, AAt a_at, const double* bpanel, double* c) {
  double acc[R][kNr] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = bpanel + p * kNr;
    for (std::size_t r = 0; r < R; ++r) {
      const double av = a_at(i0 + r, p);
#pragma omp simd
      for (std::size_t j = 0; j < kNr; ++j) acc[r][j] += av * bp[j];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    double* crow = c + (i0 + r) * n + j0;
    for (std::size_t j = 0; j < cols; ++j) crow[j] += acc[r][j];
  }
}

// pack(j0, cols, dst) fills dst[p * kNr + j] with op(B)(p, j0 + j), zero past cols.
template <typename AAt, typename Pack>
void gemm_panels(std::size_t m, std::size_t n, std::size_t k, AAt a_at, Pack pack, double* c) {
  const auto panels = static_cast<long>((n + kNr - 1) / kNr);
#pragma omp parallel
  {
    std::vector<double> packed(k * kNr);
#pragma omp for schedule(static)
    for (long pl = 0; pl < panels; ++pl) {
      const std::size_t j0 = static_cast<std::size_t>(pl) * kNr;
      const std::size_t cols = std::min(kNr, n - j0);
      pack(j0, cols, packed.data());
      const double* bp = packed.data();
      std::size_t i0 = 0;
      for (; i0 + kMr <= m; i0 += kMr) micro_tile<kMr>(i0, j0, cols, n, k, a_at, bp, c);
      if (i0 + 4 <= m) micro_tile<4>(i0, j0, cols, n, k, a_at, bp, c), i0 += 4;
      if (i0 + 2 <= m) micro_tile<2>(i0, j0, cols, n, k, a_at, bp, c), i0 += 2;
      if (i0 < m) micro_tile<1>(i0, j0, cols, n, k, a_at, bp, c);
    }
  }
}

auto pack_rows(const double* b, std::size_t n, std::size_t k) {
  return [b, n, k](std::size_t j0, std::size_t cols, double* dst) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* src = b + p * n + j0;
      double* d = dst + p * kNr;
      std::size_t j = 0;
      for (; j < cols; ++j) d[j] = src[j];
      for (; j < kNr; ++j) d[j] = 0.0;
    }
  };
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const double* ap = a.data();
  gemm_panels(m, n, k, [ap, k](std::size_t i, std::size_t p) { return ap[i * k + p]; },
              pack_rows(b.data(), n, k), c.data());
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const double* ap = a.data();
  gemm_panels(m, n, k, [ap, m](std::size_t i, std::size_t p) { return ap[p * m + i]; },
              pack_rows(b.data(), n, k), c.data());
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const double* ap = a.data();
  const double* bp = b.data();
  // B is [n, k]: the panel is a transposed block of kNr rows of B
  auto pack = [bp, k](std::size_t j0, std::size_t cols, double* dst) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double* src = bp + (j0 + j) * k;
      for (std::size_t p = 0; p < k; ++p) dst[p * kNr + j] = src[p];
    }
    for (std::size_t j = cols; j < kNr; ++j)
      for (std::size_t p = 0; p < k; ++p) dst[p * kNr + j] = 0.0;
  };
  gemm_panels(m, n, k, [ap, k](std::size_t i, std::size_t p) { return ap[i * k + p]; }, pack,
              c.data());
}

void im2col(const ConvGeometry& g, std::span<const double> input, std::span<double> col) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t khw = g.kernel_h * g.kernel_w;
  const auto rows = static_cast<long>(g.patch());
  const double* in = input.data();
  double* out = col.data();
#pragma omp parallel for schedule(static)
  for (long row = 0; row < rows; ++row) {
    const std::size_t r = static_cast<std::size_t>(row);
    const std::size_t ch = r / khw;
    const std::size_t ky = (r % khw) / g.kernel_w;
    const std::size_t kx = r % g.kernel_w;
    const double* plane = in + ch * g.height * g.width;
    double* dst = out + r * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
      double* drow = dst + oy * ow;
      if (y < 0 || y >= static_cast<long>(g.height)) {
        std::fill_n(drow, ow, 0.0);
        continue;
      }
      const double* srow = plane + static_cast<std::size_t>(y) * g.width;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
        drow[ox] = (x >= 0 && x < static_cast<long>(g.width)) ? srow[x] : 0.0;
      }
    }
  }
}

void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> input) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t khw = g.kernel_h * g.kernel_w;
  const auto channels = static_cast<long>(g.channels);
  const double* src = col.data();
  double* in = input.data();
  // one channel per task: rows of one channel all fold into the same plane
#pragma omp parallel for schedule(static)
  for (long chl = 0; chl < channels; ++chl) {
    const std::size_t ch = static_cast<std::size_t>(chl);
    double* plane = in + ch * g.height * g.width;
    for (std::size_t q = 0; q < khw; ++q) {
      const std::size_t ky = q / g.kernel_w, kx = q % g.kernel_w;
      const double* crow = src + (ch * khw + q) * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
        if (y < 0 || y >= static_cast<long>(g.height)) continue;
        double* prow = plane + static_cast<std::size_t>(y) * g.width;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
          if (x >= 0 && x < static_cast<long>(g.width)) prow[x] += crow[oy * ow + ox];
        }
      }
    }
  }
}

void maxpool2(std::size_t channels, std::size_t height, std::size_t width,
              std::span<const double> input, std::span<double> output,
              std::span<std::size_t> argmax) {
  const std::size_t oh = height / 2, ow = width / 2;
  const auto chs = static_cast<long>(channels);
#pragma omp parallel for schedule(static)
  for (long chl = 0; chl < chs; ++chl) {
    const std::size_t ch = static_cast<std::size_t>(chl);
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t top = (ch * height + 2 * oy) * width + 2 * ox;
        const std::size_t cand[4] = {top, top + 1, top + width, top + width + 1};
        std::size_t best = cand[0];
        for (std::size_t idx : cand)
          if (input[idx] > input[best]) best = idx;
        const std::size_t o = (ch * oh + oy) * ow + ox;
        output[o] = input[best];
        argmax[o] = best;
      }
  }
}

}  // namespace hdet::kernels::omp
