#include "hdet/kernels.hpp"

namespace hdet::kernels::serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

void im2col(const ConvGeometry& g, std::span<const double> input, std::span<double> col) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < g.channels; ++ch)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            const long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = y >= 0 && x >= 0 && y < static_cast<long>(g.height) &&
                                x < static_cast<long>(g.width);
            col[row * oh * ow + oy * ow + ox] =
                inside ? input[(ch * g.height + static_cast<std::size_t>(y)) * g.width +
                               static_cast<std::size_t>(x)]
                       : 0.0;
          }
}

void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> input) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < g.channels; ++ch)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx, ++row)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            const long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (y < 0 || x < 0 || y >= static_cast<long>(g.height) ||
                x >= static_cast<long>(g.width))
              continue;
            input[(ch * g.height + static_cast<std::size_t>(y)) * g.width +
                  static_cast<std::size_t>(x)] += col[row * oh * ow + oy * ow + ox];
          }
}

void maxpool2(std::size_t channels, std::size_t height, std::size_t width,
              std::span<const double> input, std::span<double> output,
              std::span<std::size_t> argmax) {
  const std::size_t oh = height / 2, ow = width / 2;
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (ch * height + 2 * oy) * width + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ch * height + 2 * oy + dy) * width + 2 * ox + dx;
            if (input[idx] > input[best]) best = idx;
          }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        output[o] = input[best];
        argmax[o] = best;
      }
}

}  // namespace hdet::kernels::serial
