#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ikshana {

/// NCHW extent of a dense 4-D tensor.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
class GradTape;

namespace detail {

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
  bool leaf = true;
};

}  // namespace detail

/// Dense row-major NCHW tensor with optional gradient tracking.
///
/// Copies share storage, like a handle. Operations never modify their
/// inputs; the only in-place mutation paths are `mutable_data()` (used by
/// optimizers and loaders between steps) and gradient accumulation during
/// `GradTape::backward`.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from_data(Shape shape, std::vector<T> values,
                               bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t numel() const { return impl_->shape.numel(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }

  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;
  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool is_leaf() const { return impl_->leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad; }
  /// Allocates (or clears) the gradient buffer to zeros.
  void zero_grad();
  void clear_grad() { impl_->grad.clear(); }

  bool all_finite() const;
  /// Deep copy without gradient or tape history.
  BasicTensor clone() const;
  BasicTensor<double> to_double() const;
  BasicTensor<float> to_float() const;

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

  // Internal: used by operations and the tape.
  const std::shared_ptr<detail::TensorStorage<T>>& storage() const { return impl_; }
  explicit BasicTensor(std::shared_ptr<detail::TensorStorage<T>> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorStorage<T>> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Per-pixel class indices, laid out (n, h, w).
struct ClassIndexMap {
  std::int64_t n = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::int32_t> values;

  static ClassIndexMap zeros(std::int64_t n, std::int64_t h, std::int64_t w) {
    return {n, h, w, std::vector<std::int32_t>(static_cast<std::size_t>(n * h * w), 0)};
  }
  std::int64_t numel() const { return n * h * w; }
  std::int32_t& at(std::int64_t b, std::int64_t y, std::int64_t x) {
    return values[static_cast<std::size_t>((b * h + y) * w + x)];
  }
  std::int32_t at(std::int64_t b, std::int64_t y, std::int64_t x) const {
    return values[static_cast<std::size_t>((b * h + y) * w + x)];
  }
};

}  // namespace ikshana
