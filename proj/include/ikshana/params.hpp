#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ikshana/tensor.hpp"

namespace ikshana {

enum class ParamRole { kConvWeight, kBias, kGamma, kBeta };

struct ParamDecl {
  std::string name;
  Shape shape;
  ParamRole role;
};

struct Parameter {
  std::string name;
  ParamRole role;
  Tensor value;
  Tensor velocity;  // optimizer state, same shape as value
};

struct NamedBuffer {
  std::string name;
  Tensor value;
};

/// Trainable parameters plus non-trainable buffers (batchnorm running
/// statistics), in insertion order. Names are unique across both.
class ParamSet {
 public:
  /// Adds a trainable parameter with a zero velocity buffer.
  Parameter& add(std::string name, ParamRole role, Tensor value);
  NamedBuffer& add_buffer(std::string name, Tensor value);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  const Parameter* find(std::string_view name) const;
  Tensor& buffer(std::string_view name);
  const Tensor& buffer(std::string_view name) const;

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  std::vector<NamedBuffer>& buffers() { return buffers_; }
  const std::vector<NamedBuffer>& buffers() const { return buffers_; }

  std::size_t size() const { return params_.size(); }
  /// Number of trainable scalars (buffers excluded).
  std::int64_t count() const;
  void zero_grad();

 private:
  void claim(const std::string& name);

  std::vector<Parameter> params_;
  std::vector<NamedBuffer> buffers_;
  std::unordered_map<std::string, std::size_t> param_index_;
  std::unordered_map<std::string, std::size_t> buffer_index_;
};

/// Conv weights ~ N(0, sqrt(2 / fan_out)) with fan_out = c_out * k * k,
/// biases and beta 0, gamma 1. Weights are drawn in declaration order from a
/// single generator seeded with `seed`.
ParamSet init_params(std::span<const ParamDecl> decls, std::uint64_t seed);

/// True when both sets hold the same names, shapes and bit patterns
/// (values, velocities and buffers).
bool bitwise_equal(const ParamSet& a, const ParamSet& b);

}  // namespace ikshana
