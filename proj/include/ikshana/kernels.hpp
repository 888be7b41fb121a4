#pragma once

#include <cstdint>

// Raw compute kernels behind the tensor operations.
//
// `parallel::` holds the production kernels (blocked GEMM, im2col
// convolution, OpenMP over independent outputs). `reference::` holds plain
// serial loops over the same contracts; they are kept for tests and the
// benchmark. Every parallel kernel partitions work so that each output
// element is reduced by exactly one thread in a fixed order, so results do
// not depend on the thread count.
//
// Backward kernels accumulate (+=) into their gradient outputs.

namespace ikshana::kernels {

struct ConvGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t in_h = 1;
  std::int64_t in_w = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel = 3;
  std::int64_t dilation = 1;
  std::int64_t padding = 1;

  std::int64_t out_h() const { return in_h + 2 * padding - dilation * (kernel - 1); }
  std::int64_t out_w() const { return in_w + 2 * padding - dilation * (kernel - 1); }
  /// Rows of the unfolded (im2col) matrix.
  std::int64_t patch_size() const { return in_channels * kernel * kernel; }
};

struct ResizeGeometry {
  std::int64_t planes = 1;  // n * c
  std::int64_t in_h = 1;
  std::int64_t in_w = 1;
  std::int64_t out_h = 1;
  std::int64_t out_w = 1;
};

namespace parallel {

/// C = op(A) * op(B) (+ C when `accumulate`), row-major with leading
/// dimensions. op(A) is M x K, op(B) is K x N.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T* c, std::int64_t ldc,
          bool accumulate);

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* output);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_in);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_out,
                            T* grad_weight, T* grad_bias);

template <typename T>
void bilinear_forward(const ResizeGeometry& g, const T* input, T* output);
template <typename T>
void bilinear_backward(const ResizeGeometry& g, const T* grad_out, T* grad_in);

/// `planes` planes of in_h x in_w, both even.
template <typename T>
void avgpool2x2_forward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                        const T* input, T* output);
template <typename T>
void avgpool2x2_backward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                         const T* grad_out, T* grad_in);

}  // namespace parallel

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T* c, std::int64_t ldc,
          bool accumulate);

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* output);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_in);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_out,
                            T* grad_weight, T* grad_bias);

template <typename T>
void bilinear_forward(const ResizeGeometry& g, const T* input, T* output);
template <typename T>
void bilinear_backward(const ResizeGeometry& g, const T* grad_out, T* grad_in);

template <typename T>
void avgpool2x2_forward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                        const T* input, T* output);
template <typename T>
void avgpool2x2_backward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                         const T* grad_out, T* grad_in);

}  // namespace reference

}  // namespace ikshana::kernels
