#include "ikshana/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ikshana {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

namespace {

void check_shape(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw std::invalid_argument("negative tensor extent: " + s.str());
  }
}

}  // namespace

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  auto s = std::make_shared<detail::TensorStorage<T>>();
  s->shape = shape;
  s->data.assign(static_cast<std::size_t>(shape.numel()), value);
  s->requires_grad = requires_grad;
  return BasicTensor(std::move(s));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_data(Shape shape, std::vector<T> values,
                                         bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                " does not match shape " + shape.str());
  }
  auto s = std::make_shared<detail::TensorStorage<T>>();
  s->shape = shape;
  s->data = std::move(values);
  s->requires_grad = requires_grad;
  return BasicTensor(std::move(s));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return full({1, 1, 1, 1}, value, requires_grad);
}

template <typename T>
T BasicTensor<T>::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  const Shape& s = impl_->shape;
  return impl_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape().str());
  return impl_->data[0];
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  for (T v : impl_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return from_data(shape(), impl_->data, false);
}

template <typename T>
BasicTensor<double> BasicTensor<T>::to_double() const {
  return BasicTensor<double>::from_data(
      shape(), std::vector<double>(impl_->data.begin(), impl_->data.end()));
}

template <typename T>
BasicTensor<float> BasicTensor<T>::to_float() const {
  std::vector<float> out(impl_->data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(impl_->data[i]);
  return BasicTensor<float>::from_data(shape(), std::move(out));
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace ikshana
