#pragma once

#include <cstdint>
#include <span>

#include "ikshana/tape.hpp"
#include "ikshana/tensor.hpp"

namespace ikshana {

enum class Mode { kTrain, kEval };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel running mean and variance, each shaped (c, 1, 1, 1).
template <typename T>
struct RunningStats {
  BasicTensor<T> mean;
  BasicTensor<T> var;

  static RunningStats fresh(std::int64_t channels) {
    return {BasicTensor<T>::zeros({channels, 1, 1, 1}), BasicTensor<T>::full({channels, 1, 1, 1}, T(1))};
  }
};

/// Shape used for per-channel vectors (bias, gamma, beta).
inline Shape channel_vector(std::int64_t c) { return {c, 1, 1, 1}; }

/// Stride-1 2-D convolution. `weight` is (co, ci, k, k) with k in {1, 3};
/// `bias` may be an undefined tensor. Throws std::invalid_argument on shape
/// problems and std::domain_error on non-finite inputs.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::int64_t dilation, std::int64_t padding);

/// Batch normalization over (n, h, w) per channel. Train mode normalizes with
/// batch statistics and updates `stats` in place; eval mode uses `stats`.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, RunningStats<T>& stats, Mode mode,
                           const BatchNormOptions& options = {});

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// 2x2 mean pooling with stride 2; rejects odd spatial sizes.
template <typename T>
BasicTensor<T> avgpool2x2(const BasicTensor<T>& input);

/// Bilinear resize with half-pixel centres and edge clamping.
template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& input, std::int64_t out_h,
                               std::int64_t out_w);

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);

/// Channels [from, to).
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::int64_t from, std::int64_t to);

/// Mean over all pixels of -log softmax(logits)[target].
template <typename T>
BasicTensor<T> softmax_cross_entropy(const BasicTensor<T>& logits, const ClassIndexMap& target);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);

/// sum(input * weights); `weights` is treated as a constant.
template <typename T>
BasicTensor<T> weighted_sum(const BasicTensor<T>& input, const BasicTensor<T>& weights);

/// Index of the largest channel at every pixel (first wins on ties).
template <typename T>
ClassIndexMap argmax_channels(const BasicTensor<T>& logits);

}  // namespace ikshana
