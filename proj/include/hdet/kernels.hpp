#pragma once

// Dense numeric kernels behind the autodiff ops.
//
// Every kernel exists twice: a plain loop nest in `serial` (the reference the
// tests compare against) and a blocked OpenMP version in `omp` (what the
// library runs). The OpenMP versions partition work over disjoint output rows,
// so every output element is reduced in the same order no matter how many
// threads run; results are identical across thread counts.
//
// All matrices are row-major and contiguous. GEMM variants accumulate into C.

#include <cstddef>
#include <span>

namespace hdet::kernels {

struct ConvGeometry {
  std::size_t channels = 0;  // input channels
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (height + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * pad - kernel_w) / stride + 1; }
  /// Rows of the unfolded matrix: channels * kernel_h * kernel_w.
  std::size_t patch() const { return channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h() * out_w(); }
};

namespace serial {

/// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
/// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
/// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

/// input [C,H,W] -> col [C*kh*kw, H'*W'] (zero padding)
void im2col(const ConvGeometry& g, std::span<const double> input, std::span<double> col);
/// Adjoint of im2col: input [C,H,W] += fold(col).
void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> input);

/// 2x2 stride-2 max pooling over [C,H,W]; argmax holds the flat input index
/// chosen for each output (first maximum in row-major window order).
void maxpool2(std::size_t channels, std::size_t height, std::size_t width,
              std::span<const double> input, std::span<double> output,
              std::span<std::size_t> argmax);

}  // namespace serial

namespace omp {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
void im2col(const ConvGeometry& g, std::span<const double> input, std::span<double> col);
void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> input);
void maxpool2(std::size_t channels, std::size_t height, std::size_t width,
              std::span<const double> input, std::span<double> output,
              std::span<std::size_t> argmax);

}  // namespace omp

}  // namespace hdet::kernels
