#include <algorithm>
#include <cmath>
#include <vector>

#include "ikshana/kernels.hpp"

namespace ikshana::kernels::parallel {

namespace {

// Upper bound on the unfolded buffer; convolution is processed in
// column chunks of output pixels to stay under it.
constexpr std::int64_t kColumnBudget = std::int64_t{1} << 21;

std::int64_t chunk_pixels(const ConvGeometry& g) {
  const std::int64_t pixels = g.out_h() * g.out_w();
  const std::int64_t fit = std::max<std::int64_t>(256, kColumnBudget / g.patch_size());
  return std::min(pixels, fit);
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.padding == 0; }

// Unfold output pixels [p0, p0 + count) of one image into col (patch_size x count).
template <typename T>
void im2col(const ConvGeometry& g, const T* image, std::int64_t p0, std::int64_t count, T* col) {
  const std::int64_t ow = g.out_w();
  const std::int64_t rows = g.patch_size();
  const std::int64_t kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t ci = r / kk;
    const std::int64_t ky = (r % kk) / g.kernel;
    const std::int64_t kx = r % g.kernel;
    const T* plane = image + ci * g.in_h * g.in_w;
    T* dst = col + r * count;
    std::int64_t oy = p0 / ow;
    std::int64_t ox = p0 % ow;
    for (std::int64_t i = 0; i < count; ++i) {
      const std::int64_t iy = oy - g.padding + ky * g.dilation;
      const std::int64_t ix = ox - g.padding + kx * g.dilation;
      const bool inside = iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w;
      dst[i] = inside ? plane[iy * g.in_w + ix] : T(0);
      if (++ox == ow) {
        ox = 0;
        ++oy;
      }
    }
  }
}

// Scatter-add col back into the image gradient. Each input channel owns its
// plane, so channels run in parallel without write conflicts.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, std::int64_t p0, std::int64_t count,
            T* image_grad) {
  const std::int64_t ow = g.out_w();
  const std::int64_t kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
    T* plane = image_grad + ci * g.in_h * g.in_w;
    for (std::int64_t t = 0; t < kk; ++t) {
      const std::int64_t ky = t / g.kernel;
      const std::int64_t kx = t % g.kernel;
      const T* src = col + (ci * kk + t) * count;
      std::int64_t oy = p0 / ow;
      std::int64_t ox = p0 % ow;
      for (std::int64_t i = 0; i < count; ++i) {
        const std::int64_t iy = oy - g.padding + ky * g.dilation;
        const std::int64_t ix = ox - g.padding + kx * g.dilation;
        if (iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w) plane[iy * g.in_w + ix] += src[i];
        if (++ox == ow) {
          ox = 0;
          ++oy;
        }
      }
    }
  }
}

struct AxisTaps {
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;
  std::vector<double> frac;  // weight of `hi`
};

// Half-pixel centres, source coordinate clamped to [0, in - 1].
AxisTaps axis_taps(std::int64_t in, std::int64_t out) {
  AxisTaps t;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::int64_t>(std::floor(src));
    const auto i = static_cast<std::size_t>(d);
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.frac[i] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* output) {
  const std::int64_t pixels = g.out_h() * g.out_w();
  const std::int64_t in_stride = g.in_channels * g.in_h * g.in_w;
  const std::int64_t out_stride = g.out_channels * pixels;
  const std::int64_t chunk = chunk_pixels(g);
  std::vector<T> col;
  if (!is_pointwise(g)) col.resize(static_cast<std::size_t>(g.patch_size() * chunk));

  for (std::int64_t b = 0; b < g.batch; ++b) {
    const T* in_b = input + b * in_stride;
    T* out_b = output + b * out_stride;
    if (is_pointwise(g)) {
      gemm<T>(false, false, g.out_channels, pixels, g.in_channels, weight, g.in_channels, in_b,
              pixels, out_b, pixels, false);
    } else {
      for (std::int64_t p0 = 0; p0 < pixels; p0 += chunk) {
        const std::int64_t count = std::min(chunk, pixels - p0);
        im2col(g, in_b, p0, count, col.data());
        gemm<T>(false, false, g.out_channels, count, g.patch_size(), weight, g.patch_size(),
                col.data(), count, out_b + p0, pixels, false);
      }
    }
    if (bias != nullptr) {
#pragma omp parallel for schedule(static)
      for (std::int64_t co = 0; co < g.out_channels; ++co) {
        T* plane = out_b + co * pixels;
        for (std::int64_t i = 0; i < pixels; ++i) plane[i] += bias[co];
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_out, const T* weight,
                           T* grad_in) {
  const std::int64_t pixels = g.out_h() * g.out_w();
  const std::int64_t in_stride = g.in_channels * g.in_h * g.in_w;
  const std::int64_t out_stride = g.out_channels * pixels;
  const std::int64_t chunk = chunk_pixels(g);
  std::vector<T> col;
  if (!is_pointwise(g)) col.resize(static_cast<std::size_t>(g.patch_size() * chunk));

  for (std::int64_t b = 0; b < g.batch; ++b) {
    const T* go_b = grad_out + b * out_stride;
    T* gi_b = grad_in + b * in_stride;
    if (is_pointwise(g)) {
      gemm<T>(true, false, g.in_channels, pixels, g.out_channels, weight, g.in_channels, go_b,
              pixels, gi_b, pixels, true);
      continue;
    }
    for (std::int64_t p0 = 0; p0 < pixels; p0 += chunk) {
      const std::int64_t count = std::min(chunk, pixels - p0);
      gemm<T>(true, false, g.patch_size(), count, g.out_channels, weight, g.patch_size(),
              go_b + p0, pixels, col.data(), count, false);
      col2im(g, col.data(), p0, count, gi_b);
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* input, const T* grad_out,
                            T* grad_weight, T* grad_bias) {
  const std::int64_t pixels = g.out_h() * g.out_w();
  const std::int64_t in_stride = g.in_channels * g.in_h * g.in_w;
  const std::int64_t out_stride = g.out_channels * pixels;
  const std::int64_t chunk = chunk_pixels(g);
  std::vector<T> col;
  if (!is_pointwise(g)) col.resize(static_cast<std::size_t>(g.patch_size() * chunk));

  for (std::int64_t b = 0; b < g.batch; ++b) {
    const T* in_b = input + b * in_stride;
    const T* go_b = grad_out + b * out_stride;
    if (is_pointwise(g)) {
      gemm<T>(false, true, g.out_channels, g.in_channels, pixels, go_b, pixels, in_b, pixels,
              grad_weight, g.in_channels, true);
    } else {
      for (std::int64_t p0 = 0; p0 < pixels; p0 += chunk) {
        const std::int64_t count = std::min(chunk, pixels - p0);
        im2col(g, in_b, p0, count, col.data());
        gemm<T>(false, true, g.out_channels, g.patch_size(), count, go_b + p0, pixels,
                col.data(), count, grad_weight, g.patch_size(), true);
      }
    }
    if (grad_bias != nullptr) {
#pragma omp parallel for schedule(static)
      for (std::int64_t co = 0; co < g.out_channels; ++co) {
        const T* plane = go_b + co * pixels;
        T sum = T(0);
        for (std::int64_t i = 0; i < pixels; ++i) sum += plane[i];
        grad_bias[co] += sum;
      }
    }
  }
}

template <typename T>
void bilinear_forward(const ResizeGeometry& g, const T* input, T* output) {
  const AxisTaps ty = axis_taps(g.in_h, g.out_h);
  const AxisTaps tx = axis_taps(g.in_w, g.out_w);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < g.planes; ++p) {
    const T* src = input + p * g.in_h * g.in_w;
    T* dst = output + p * g.out_h * g.out_w;
    for (std::int64_t y = 0; y < g.out_h; ++y) {
      const auto yi = static_cast<std::size_t>(y);
      const T fy = static_cast<T>(ty.frac[yi]);
      const T* r0 = src + ty.lo[yi] * g.in_w;
      const T* r1 = src + ty.hi[yi] * g.in_w;
      for (std::int64_t x = 0; x < g.out_w; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const T fx = static_cast<T>(tx.frac[xi]);
        const std::int64_t x0 = tx.lo[xi];
        const std::int64_t x1 = tx.hi[xi];
        const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
        const T bottom = r1[x0] + fx * (r1[x1] - r1[x0]);
        dst[y * g.out_w + x] = top + fy * (bottom - top);
      }
    }
  }
}

template <typename T>
void bilinear_backward(const ResizeGeometry& g, const T* grad_out, T* grad_in) {
  const AxisTaps ty = axis_taps(g.in_h, g.out_h);
  const AxisTaps tx = axis_taps(g.in_w, g.out_w);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < g.planes; ++p) {
    const T* src = grad_out + p * g.out_h * g.out_w;
    T* dst = grad_in + p * g.in_h * g.in_w;
    for (std::int64_t y = 0; y < g.out_h; ++y) {
      const auto yi = static_cast<std::size_t>(y);
      const T fy = static_cast<T>(ty.frac[yi]);
      T* r0 = dst + ty.lo[yi] * g.in_w;
      T* r1 = dst + ty.hi[yi] * g.in_w;
      for (std::int64_t x = 0; x < g.out_w; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const T fx = static_cast<T>(tx.frac[xi]);
        const T v = src[y * g.out_w + x];
        const T top = v * (T(1) - fy);
        const T bottom = v * fy;
        r0[tx.lo[xi]] += top * (T(1) - fx);
        r0[tx.hi[xi]] += top * fx;
        r1[tx.lo[xi]] += bottom * (T(1) - fx);
        r1[tx.hi[xi]] += bottom * fx;
      }
    }
  }
}

template <typename T>
void avgpool2x2_forward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                        const T* input, T* output) {
  const std::int64_t oh = in_h / 2;
  const std::int64_t ow = in_w / 2;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = input + p * in_h * in_w;
    T* dst = output + p * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      const T* r0 = src + 2 * y * in_w;
      const T* r1 = r0 + in_w;
      for (std::int64_t x = 0; x < ow; ++x) {
        dst[y * ow + x] = T(0.25) * ((r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]));
      }
    }
  }
}

template <typename T>
void avgpool2x2_backward(std::int64_t planes, std::int64_t in_h, std::int64_t in_w,
                         const T* grad_out, T* grad_in) {
  const std::int64_t oh = in_h / 2;
  const std::int64_t ow = in_w / 2;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = grad_out + p * oh * ow;
    T* dst = grad_in + p * in_h * in_w;
    for (std::int64_t y = 0; y < oh; ++y) {
      T* r0 = dst + 2 * y * in_w;
      T* r1 = r0 + in_w;
      for (std::int64_t x = 0; x < ow; ++x) {
        const T v = T(0.25) * src[y * ow + x];
        r0[2 * x] += v;
        r0[2 * x + 1] += v;
        r1[2 * x] += v;
        r1[2 * x + 1] += v;
      }
    }
  }
}

#define IKSHANA_INSTANTIATE(T)                                                              \
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

}  // namespace ikshana::kernels::parallel
