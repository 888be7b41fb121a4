// Straightforward serial loops. Slow; used as the comparison baseline in
// tests and the benchmark.

#include <algorithm>
#include <cmath>

#include "ikshana/kernels.hpp"

namespace ikshana::kernels::reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T* c, std::int64_t ldc,
          bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      T sum = T(0);
      for (std::int64_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const T bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        sum += av * bv;
      }
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + sum : sum;
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* output) {
  const std::int64_t oh = g.out_h();
  const std::int64_t ow = g.out_w();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t co = 0; co < g.out_channels; ++co) {
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
          T sum = bias != nullptr ? bias[co] : T(0);
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
              const std::int64_t iy = y - g.padding + ky * g.dilation;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
                const std::int64_t ix = x - g.padding + kx * g.dilation;
                if (ix < 0 || ix >= g.in_w) continue;
                sum += input[((b * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] *
                       weight[((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx];
              }
            }
          }
          output[((b * g.out_channels + co) * oh + y) * ow + x] = sum;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_in) {
  const std::int64_t oh = g.out_h();
  const std::int64_t ow = g.out_w();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t co = 0; co < g.out_channels; ++co) {
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
          const T go = grad_out[((b * g.out_channels + co) * oh + y) * ow + x];
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
              const std::int64_t iy = y - g.padding + ky * g.dilation;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
                const std::int64_t ix = x - g.padding + kx * g.dilation;
                if (ix < 0 || ix >= g.in_w) continue;
                grad_in[((b * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] +=
                    go * weight[((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_out,
                            T* grad_weight, T* grad_bias) {
  const std::int64_t oh = g.out_h();
  const std::int64_t ow = g.out_w();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t co = 0; co < g.out_channels; ++co) {
      for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
          const T go = grad_out[((b * g.out_channels + co) * oh + y) * ow + x];
          if (grad_bias != nullptr) grad_bias[co] += go;
          for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
            for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
              const std::int64_t iy = y - g.padding + ky * g.dilation;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
                const std::int64_t ix = x - g.padding + kx * g.dilation;
                if (ix < 0 || ix >= g.in_w) continue;
                grad_weight[((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx] +=
                    go * input[((b * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
        }
      }
    }
  }
}

namespace {

struct Tap {
  std::int64_t lo;
  std::int64_t hi;
  double frac;
};

Tap source_tap(std::int64_t dst, std::int64_t in, std::int64_t out) {
  double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                   static_cast<double>(out) -
               0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in - 1));
  const auto lo = static_cast<std::int64_t>(std::floor(src));
  return {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
}

}  // namespace

template <typename T>
void bilinear_forward(const ResizeGeometry& g, const T* input, T* output) {
  for (std::int64_t p = 0; p < g.planes; ++p) {
    for (std::int64_t y = 0; y < g.out_h; ++y) {
      const Tap ty = source_tap(y, g.in_h, g.out_h);
      for (std::int64_t x = 0; x < g.out_w; ++x) {
        const Tap tx = source_tap(x, g.in_w, g.out_w);
        const T* plane = input + p * g.in_h * g.in_w;
        const T fy = static_cast<T>(ty.frac);
        const T fx = static_cast<T>(tx.frac);
        const T v00 = plane[ty.lo * g.in_w + tx.lo];
        const T v01 = plane[ty.lo * g.in_w + tx.hi];
        const T v10 = plane[ty.hi * g.in_w + tx.lo];
        const T v11 = plane[ty.hi * g.in_w + tx.hi];
        const T top = v00 + fx * (v01 - v00);
        const T bottom = v10 + fx * (v11 - v10);
        output[(p * g.out_h + y) * g.out_w + x] = top + fy * (bottom - top);
      }
    }
  }
}

template <typename T>
void bilinear_backward(const ResizeGeometry& g, const T* grad_out, T* grad_in) {
  for (std::int64_t p = 0; p < g.planes; ++p) {
    for (std::int64_t y = 0; y < g.out_h; ++y) {
      const Tap ty = source_tap(y, g.in_h, g.out_h);
      for (std::int64_t x = 0; x < g.out_w; ++x) {
        const Tap tx = source_tap(x, g.in_w, g.out_w);
        T* plane = grad_in + p * g.in_h * g.in_w;
        const T v = grad_out[(p * g.out_h + y) * g.out_w + x];
        const T fy = static_cast<T>(ty.frac);
        const T fx = static_cast<T>(tx.frac);
        plane[ty.lo * g.in_w + tx.lo] += v * (T(1) - fy) * (T(1) - fx);
        plane[ty.lo * g.in_w + tx.hi] += v * (T(1) - fy) * fx;
        plane[ty.hi * g.in_w + tx.lo] += v * fy * (T(1) - fx);
        plane[ty.hi * g.in_w + tx.hi] += v * fy * fx;
      }
    }
  }
}

template <typename T>
void avgpool2x2_forward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                        const T* input, T* output) {
  const std::int64_t oh = in_h / 2;
  const std::int64_t ow = in_w / 2;
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t x = 0; x < ow; ++x) {
        T sum = T(0);
        for (std::int64_t dy = 0; dy < 2; ++dy) {
          for (std::int64_t dx = 0; dx < 2; ++dx) {
            sum += input[(p * in_h + 2 * y + dy) * in_w + 2 * x + dx];
          }
        }
        output[(p * oh + y) * ow + x] = sum / T(4);
      }
    }
  }
}

template <typename T>
void avgpool2x2_backward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                         const T* grad_out, T* grad_in) {
  const std::int64_t oh = in_h / 2;
  const std::int64_t ow = in_w / 2;
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t y = 0; y < in_h; ++y) {
      for (std::int64_t x = 0; x < in_w; ++x) {
        grad_in[(p * in_h + y) * in_w + x] += grad_out[(p * oh + y / 2) * ow + x / 2] / T(4);
      }
    }
  }
}

#define IKSHANA_INSTANTIATE(T)                                                              \
  template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, const T*,     \
                        std::int64_t, const T*, std::int64_t, T*, std::int64_t, bool);      \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);   \
  template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);      \
  template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*); \
  template void bilinear_forward<T>(const ResizeGeometry&, const T*, T*);                   \
  template void bilinear_backward<T>(const ResizeGeometry&, const T*, T*);                  \
  template void avgpool2x2_forward<T>(std::int64_t, std::int64_t, std::int64_t, const T*,   \
                                      T*);                                                  \
  template void avgpool2x2_backward<T>(std::int64_t, std::int64_t, std::int64_t, const T*,  \
                                       T*);

IKSHANA_INSTANTIATE(float)
IKSHANA_INSTANTIATE(double)
#undef IKSHANA_INSTANTIATE

}  // namespace ikshana::kernels::reference
