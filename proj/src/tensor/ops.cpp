#include "ikshana/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ikshana/kernels.hpp"

namespace ikshana {

namespace {

template <typename T>
using StoragePtr = std::shared_ptr<detail::TensorStorage<T>>;

template <typename T>
StoragePtr<T> new_storage(Shape shape) {
  auto s = std::make_shared<detail::TensorStorage<T>>();
  s->shape = shape;
  s->data.assign(static_cast<std::size_t>(shape.numel()), T(0));
  return s;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* op, const char* name) {
  if (!t.all_finite()) {
    throw std::domain_error(std::string(op) + ": non-finite values in " + name);
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::int64_t dilation, std::int64_t padding) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  require(ws.h == ws.w && (ws.h == 1 || ws.h == 3), "conv2d: kernel must be 1x1 or 3x3");
  require(ws.c == is.c, "conv2d: weight expects " + std::to_string(ws.c) +
                            " input channels, got " + std::to_string(is.c));
  require(dilation >= 1, "conv2d: dilation must be positive");
  require(padding >= 0, "conv2d: padding must be non-negative");
  if (bias.defined()) require(bias.numel() == ws.n, "conv2d: bias length mismatch");

  kernels::ConvGeometry g{is.n, is.c, is.h, is.w, ws.n, ws.h, dilation, padding};
  require(g.out_h() > 0 && g.out_w() > 0, "conv2d: output would be empty for input " + is.str());
  require_finite(input, "conv2d", "input");
  require_finite(weight, "conv2d", "weight");
  if (bias.defined()) require_finite(bias, "conv2d", "bias");

  auto out = new_storage<T>({is.n, ws.n, g.out_h(), g.out_w()});
  kernels::parallel::conv2d_forward(g, input.data().data(), weight.data().data(),
                                    bias.defined() ? bias.data().data() : nullptr,
                                    out->data.data());

  if (auto* tape = detail::recording_tape<T>({&input, &weight, &bias})) {
    StoragePtr<T> in_s = input.storage();
    StoragePtr<T> w_s = weight.storage();
    StoragePtr<T> b_s = bias.defined() ? bias.storage() : nullptr;
    std::vector<StoragePtr<T>> inputs{in_s, w_s};
    if (b_s) inputs.push_back(b_s);
    tape->record("conv2d", std::move(inputs), out, [g, in_s, w_s, b_s](std::span<const T> go) {
      if (in_s->requires_grad) {
        kernels::parallel::conv2d_backward_input(g, go.data(), w_s->data.data(),
                                                 detail::grad_buffer(*in_s).data());
      }
      const bool want_bias = b_s && b_s->requires_grad;
      if (w_s->requires_grad) {
        kernels::parallel::conv2d_backward_weight(
            g, in_s->data.data(), go.data(), detail::grad_buffer(*w_s).data(),
            want_bias ? detail::grad_buffer(*b_s).data() : nullptr);
      } else if (want_bias) {
        auto gb = detail::grad_buffer(*b_s);
        const std::int64_t pixels = g.out_h() * g.out_w();
        for (std::int64_t b = 0; b < g.batch; ++b) {
          for (std::int64_t co = 0; co < g.out_channels; ++co) {
            const T* plane = go.data() + (b * g.out_channels + co) * pixels;
            T s = T(0);
            for (std::int64_t i = 0; i < pixels; ++i) s += plane[i];
            gb[static_cast<std::size_t>(co)] += s;
          }
        }
      }
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, RunningStats<T>& stats, Mode mode,
                           const BatchNormOptions& options) {
  const Shape& s = input.shape();
  require(gamma.numel() == s.c && beta.numel() == s.c, "batchnorm2d: gamma/beta length mismatch");
  require(stats.mean.numel() == s.c && stats.var.numel() == s.c,
          "batchnorm2d: running statistics length mismatch");
  require(options.eps > 0.0, "batchnorm2d: eps must be positive");
  require(options.momentum >= 0.0 && options.momentum <= 1.0,
          "batchnorm2d: momentum must lie in [0, 1]");

  const std::int64_t channels = s.c;
  const std::int64_t plane = s.plane();
  const std::int64_t count = s.n * plane;
  const bool train = mode == Mode::kTrain;
  require(count > 0, "batchnorm2d: empty input");

  std::vector<T> mean(static_cast<std::size_t>(channels));
  std::vector<T> invstd(static_cast<std::size_t>(channels));
  const T* x = input.data().data();
  auto out = new_storage<T>(s);
  T* y = out->data.data();
  const T* gm = gamma.data().data();
  const T* bt = beta.data().data();

#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < channels; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double mu;
    double var;
    if (train) {
      double acc = 0.0;
      for (std::int64_t b = 0; b < s.n; ++b) {
        const T* p = x + (b * channels + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      }
      mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::int64_t b = 0; b < s.n; ++b) {
        const T* p = x + (b * channels + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(count);
    } else {
      mu = static_cast<double>(stats.mean.data()[ci]);
      var = static_cast<double>(stats.var.data()[ci]);
    }
    const double inv = 1.0 / std::sqrt(var + options.eps);
    mean[ci] = static_cast<T>(mu);
    invstd[ci] = static_cast<T>(inv);
    const T m = mean[ci];
    const T scale = static_cast<T>(inv * static_cast<double>(gm[c]));
    for (std::int64_t b = 0; b < s.n; ++b) {
      const T* p = x + (b * channels + c) * plane;
      T* q = y + (b * channels + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) q[i] = (p[i] - m) * scale + bt[c];
    }
    if (train) {
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      auto rm = stats.mean.mutable_data();
      auto rv = stats.var.mutable_data();
      rm[ci] = static_cast<T>((1.0 - options.momentum) * rm[ci] + options.momentum * mu);
      rv[ci] = static_cast<T>((1.0 - options.momentum) * rv[ci] + options.momentum * unbiased);
    }
  }

  if (auto* tape = detail::recording_tape<T>({&input, &gamma, &beta})) {
    StoragePtr<T> x_s = input.storage();
    StoragePtr<T> g_s = gamma.storage();
    StoragePtr<T> b_s = beta.storage();
    tape->record(
        "batchnorm2d", {x_s, g_s, b_s}, out,
        [x_s, g_s, b_s, mean = std::move(mean), invstd = std::move(invstd), train](
            std::span<const T> go) {
          const Shape& s = x_s->shape;
          const std::int64_t channels = s.c;
          const std::int64_t plane = s.plane();
          const auto count = static_cast<double>(s.n * plane);
          const T* x = x_s->data.data();
          T* gx = x_s->requires_grad ? detail::grad_buffer(*x_s).data() : nullptr;
          T* gg = g_s->requires_grad ? detail::grad_buffer(*g_s).data() : nullptr;
          T* gb = b_s->requires_grad ? detail::grad_buffer(*b_s).data() : nullptr;
#pragma omp parallel for schedule(static)
          for (std::int64_t c = 0; c < channels; ++c) {
            const auto ci = static_cast<std::size_t>(c);
            const double m = mean[ci];
            const double inv = invstd[ci];
            double sum_dy = 0.0;
            double sum_dy_xhat = 0.0;
            for (std::int64_t b = 0; b < s.n; ++b) {
              const T* p = x + (b * channels + c) * plane;
              const T* d = go.data() + (b * channels + c) * plane;
              for (std::int64_t i = 0; i < plane; ++i) {
                sum_dy += d[i];
                sum_dy_xhat += static_cast<double>(d[i]) * (static_cast<double>(p[i]) - m) * inv;
              }
            }
            if (gg != nullptr) gg[c] += static_cast<T>(sum_dy_xhat);
            if (gb != nullptr) gb[c] += static_cast<T>(sum_dy);
            if (gx == nullptr) continue;
            const double gamma_c = g_s->data[ci];
            for (std::int64_t b = 0; b < s.n; ++b) {
              const T* p = x + (b * channels + c) * plane;
              const T* d = go.data() + (b * channels + c) * plane;
              T* q = gx + (b * channels + c) * plane;
              if (train) {
                const double k = gamma_c * inv / count;
                for (std::int64_t i = 0; i < plane; ++i) {
                  const double xhat = (static_cast<double>(p[i]) - m) * inv;
                  q[i] += static_cast<T>(k * (count * d[i] - sum_dy - xhat * sum_dy_xhat));
                }
              } else {
                const T k = static_cast<T>(gamma_c * inv);
                for (std::int64_t i = 0; i < plane; ++i) q[i] += k * d[i];
              }
            }
          }
        });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  auto out = new_storage<T>(input.shape());
  const T* x = input.data().data();
  T* y = out->data.data();
  const std::int64_t n = input.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);

  if (auto* tape = detail::recording_tape<T>({&input})) {
    StoragePtr<T> x_s = input.storage();
    tape->record("relu", {x_s}, out, [x_s](std::span<const T> go) {
      T* gx = detail::grad_buffer(*x_s).data();
      const T* x = x_s->data.data();
      const auto n = static_cast<std::int64_t>(go.size());
#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < n; ++i) {
        if (x[i] > T(0)) gx[i] += go[static_cast<std::size_t>(i)];
      }
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> avgpool2x2(const BasicTensor<T>& input) {
  const Shape& s = input.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0,
          "avgpool2x2: spatial size must be even, got " + std::to_string(s.h) + "x" + std::to_string(s.w));
  auto out = new_storage<T>({s.n, s.c, s.h / 2, s.w / 2});
  kernels::parallel::avgpool2x2_forward(s.n * s.c, s.h, s.w, input.data().data(), out->data.data());
  if (auto* tape = detail::recording_tape<T>({&input})) {
    StoragePtr<T> x_s = input.storage();
    tape->record("avgpool2x2", {x_s}, out, [x_s](std::span<const T> go) {
      const Shape& s = x_s->shape;
      kernels::parallel::avgpool2x2_backward(s.n * s.c, s.h, s.w, go.data(),
                                             detail::grad_buffer(*x_s).data());
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& input, std::int64_t out_h, std::int64_t out_w) {
  require(out_h >= 1 && out_w >= 1, "bilinear_resize: target size must be positive");
  const Shape& s = input.shape();
  require(s.h >= 1 && s.w >= 1, "bilinear_resize: empty input");
  kernels::ResizeGeometry g{s.n * s.c, s.h, s.w, out_h, out_w};
  auto out = new_storage<T>({s.n, s.c, out_h, out_w});
  kernels::parallel::bilinear_forward(g, input.data().data(), out->data.data());
  if (auto* tape = detail::recording_tape<T>({&input})) {
    StoragePtr<T> x_s = input.storage();
    tape->record("bilinear_resize", {x_s}, out, [g, x_s](std::span<const T> go) {
      kernels::parallel::bilinear_backward(g, go.data(), detail::grad_buffer(*x_s).data());
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels: mismatched parts " + first.str() + " and " + s.str());
    channels += s.c;
  }
  const std::int64_t plane = first.plane();
  auto out = new_storage<T>({first.n, channels, first.h, first.w});
  T* y = out->data.data();
  for (std::int64_t b = 0; b < first.n; ++b) {
    std::int64_t offset = 0;
    for (const auto& p : parts) {
      const std::int64_t block = p.shape().c * plane;
      std::copy_n(p.data().data() + b * block, block, y + (b * channels + offset) * plane);
      offset += p.shape().c;
    }
  }

  GradTape<T>* tape = GradTape<T>::active();
  const bool any = std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.requires_grad(); });
  if (tape != nullptr && any) {
    std::vector<StoragePtr<T>> inputs;
    for (const auto& p : parts) inputs.push_back(p.storage());
    tape->record("concat_channels", inputs, out, [inputs, channels](std::span<const T> go) {
      const Shape& s0 = inputs.front()->shape;
      const std::int64_t plane = s0.plane();
      std::int64_t offset = 0;
      for (const auto& in : inputs) {
        const std::int64_t block = in->shape.c * plane;
        if (in->requires_grad) {
          T* gx = detail::grad_buffer(*in).data();
          for (std::int64_t b = 0; b < s0.n; ++b) {
            const T* src = go.data() + (b * channels + offset) * plane;
            T* dst = gx + b * block;
            for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += in->shape.c;
      }
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::int64_t from, std::int64_t to) {
  const Shape& s = input.shape();
  require(from >= 0 && from < to && to <= s.c,
          "slice_channels: range [" + std::to_string(from) + ", " + std::to_string(to) +
              ") invalid for " + std::to_string(s.c) + " channels");
  const std::int64_t plane = s.plane();
  const std::int64_t width = to - from;
  auto out = new_storage<T>({s.n, width, s.h, s.w});
  for (std::int64_t b = 0; b < s.n; ++b) {
    std::copy_n(input.data().data() + (b * s.c + from) * plane, width * plane,
                out->data.data() + b * width * plane);
  }
  if (auto* tape = detail::recording_tape<T>({&input})) {
    StoragePtr<T> x_s = input.storage();
    tape->record("slice_channels", {x_s}, out, [x_s, from, width](std::span<const T> go) {
      const Shape& s = x_s->shape;
      const std::int64_t plane = s.plane();
      T* gx = detail::grad_buffer(*x_s).data();
      for (std::int64_t b = 0; b < s.n; ++b) {
        const T* src = go.data() + b * width * plane;
        T* dst = gx + (b * s.c + from) * plane;
        for (std::int64_t i = 0; i < width * plane; ++i) dst[i] += src[i];
      }
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, const ClassIndexMap& target) {
  const Shape& s = logits.shape();
  require(target.n == s.n && target.h == s.h && target.w == s.w &&
              static_cast<std::int64_t>(target.values.size()) == target.numel(),
          "softmax_cross_entropy: target shape does not match logits " + s.str());
  for (std::int32_t v : target.values) {
    if (v < 0 || v >= s.c) {
      throw std::invalid_argument("softmax_cross_entropy: target index " + std::to_string(v) +
                                  " outside [0, " + std::to_string(s.c) + ")");
    }
  }
  const std::int64_t plane = s.plane();
  const std::int64_t pixels = s.n * plane;
  require(pixels > 0, "softmax_cross_entropy: empty input");
  const T* x = logits.data().data();

  std::vector<double> per_batch(static_cast<std::size_t>(s.n), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < s.n; ++b) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) {
      const T* px = x + b * s.c * plane + i;
      double mx = px[0];
      for (std::int64_t c = 1; c < s.c; ++c) mx = std::max(mx, static_cast<double>(px[c * plane]));
      double z = 0.0;
      for (std::int64_t c = 0; c < s.c; ++c) z += std::exp(static_cast<double>(px[c * plane]) - mx);
      const std::int32_t t = target.values[static_cast<std::size_t>(b * plane + i)];
      acc += std::log(z) + mx - static_cast<double>(px[t * plane]);
    }
    per_batch[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double v : per_batch) total += v;
  auto out = new_storage<T>({1, 1, 1, 1});
  out->data[0] = static_cast<T>(total / static_cast<double>(pixels));

  if (auto* tape = detail::recording_tape<T>({&logits})) {
    StoragePtr<T> x_s = logits.storage();
    tape->record("softmax_cross_entropy", {x_s}, out, [x_s, target, pixels](std::span<const T> go) {
      const Shape& s = x_s->shape;
      const std::int64_t plane = s.plane();
      const T* x = x_s->data.data();
      T* gx = detail::grad_buffer(*x_s).data();
      const double scale = static_cast<double>(go[0]) / static_cast<double>(pixels);
#pragma omp parallel for schedule(static)
      for (std::int64_t b = 0; b < s.n; ++b) {
        for (std::int64_t i = 0; i < plane; ++i) {
          const std::int64_t base = b * s.c * plane + i;
          double mx = x[base];
          for (std::int64_t c = 1; c < s.c; ++c) mx = std::max(mx, static_cast<double>(x[base + c * plane]));
          double z = 0.0;
          for (std::int64_t c = 0; c < s.c; ++c) z += std::exp(static_cast<double>(x[base + c * plane]) - mx);
          const std::int32_t t = target.values[static_cast<std::size_t>(b * plane + i)];
          for (std::int64_t c = 0; c < s.c; ++c) {
            double p = std::exp(static_cast<double>(x[base + c * plane]) - mx) / z;
            if (c == t) p -= 1.0;
            gx[base + c * plane] += static_cast<T>(p * scale);
          }
        }
      }
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
  double acc = 0.0;
  for (T v : input.data()) acc += v;
  auto out = new_storage<T>({1, 1, 1, 1});
  out->data[0] = static_cast<T>(acc);
  if (auto* tape = detail::recording_tape<T>({&input})) {
    StoragePtr<T> x_s = input.storage();
    tape->record("sum", {x_s}, out, [x_s](std::span<const T> go) {
      for (T& g : detail::grad_buffer(*x_s)) g += go[0];
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
BasicTensor<T> weighted_sum(const BasicTensor<T>& input, const BasicTensor<T>& weights) {
  require(input.shape() == weights.shape(), "weighted_sum: shape mismatch");
  double acc = 0.0;
  const auto x = input.data();
  const auto w = weights.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]) * w[i];
  auto out = new_storage<T>({1, 1, 1, 1});
  out->data[0] = static_cast<T>(acc);
  if (auto* tape = detail::recording_tape<T>({&input})) {
    StoragePtr<T> x_s = input.storage();
    StoragePtr<T> w_s = weights.storage();
    tape->record("weighted_sum", {x_s}, out, [x_s, w_s](std::span<const T> go) {
      auto gx = detail::grad_buffer(*x_s);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[0] * w_s->data[i];
    });
  }
  return BasicTensor<T>(out);
}

template <typename T>
ClassIndexMap argmax_channels(const BasicTensor<T>& logits) {
  const Shape& s = logits.shape();
  ClassIndexMap out = ClassIndexMap::zeros(s.n, s.h, s.w);
  const std::int64_t plane = s.plane();
  const T* x = logits.data().data();
  for (std::int64_t b = 0; b < s.n; ++b) {
    for (std::int64_t i = 0; i < plane; ++i) {
      const T* px = x + b * s.c * plane + i;
      std::int32_t best = 0;
      for (std::int64_t c = 1; c < s.c; ++c) {
        if (px[c * plane] > px[best * plane]) best = static_cast<std::int32_t>(c);
      }
      out.values[static_cast<std::size_t>(b * plane + i)] = best;
    }
  }
  return out;
}

#define IKSHANA_INSTANTIATE(T)                                                                    \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                                 const BasicTensor<T>&, std::int64_t, std::int64_t);              \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                      const BasicTensor<T>&, RunningStats<T>&, Mode,              \
                                      const BatchNormOptions&);                                   \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                            \
  template BasicTensor<T> avgpool2x2(const BasicTensor<T>&);                                      \
  template BasicTensor<T> bilinear_resize(const BasicTensor<T>&, std::int64_t, std::int64_t);     \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>>);                       \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::int64_t, std::int64_t);      \
  template BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>&, const ClassIndexMap&);     \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                             \
  template BasicTensor<T> weighted_sum(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template ClassIndexMap argmax_channels(const BasicTensor<T>&);

IKSHANA_INSTANTIATE(float)
IKSHANA_INSTANTIATE(double)
#undef IKSHANA_INSTANTIATE

}  // namespace ikshana
