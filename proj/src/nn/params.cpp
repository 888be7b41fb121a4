#include "ikshana/params.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ikshana/rng.hpp"

namespace ikshana {

void ParamSet::claim(const std::string& name) {
  if (param_index_.contains(name) || buffer_index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
}

Parameter& ParamSet::add(std::string name, ParamRole role, Tensor value) {
  claim(name);
  param_index_.emplace(name, params_.size());
  Tensor velocity = Tensor::zeros(value.shape());
  params_.push_back({std::move(name), role, std::move(value), std::move(velocity)});
  return params_.back();
}

NamedBuffer& ParamSet::add_buffer(std::string name, Tensor value) {
  claim(name);
  buffer_index_.emplace(name, buffers_.size());
  buffers_.push_back({std::move(name), std::move(value)});
  return buffers_.back();
}

Parameter& ParamSet::at(std::string_view name) {
  auto it = param_index_.find(std::string(name));
  if (it == param_index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return params_[it->second];
}

const Parameter& ParamSet::at(std::string_view name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

const Parameter* ParamSet::find(std::string_view name) const {
  auto it = param_index_.find(std::string(name));
  return it == param_index_.end() ? nullptr : &params_[it->second];
}

Tensor& ParamSet::buffer(std::string_view name) {
  auto it = buffer_index_.find(std::string(name));
  if (it == buffer_index_.end()) throw std::out_of_range("no buffer named " + std::string(name));
  return buffers_[it->second].value;
}

const Tensor& ParamSet::buffer(std::string_view name) const {
  return const_cast<ParamSet*>(this)->buffer(name);
}

std::int64_t ParamSet::count() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += p.value.numel();
  return total;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

ParamSet init_params(std::span<const ParamDecl> decls, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet set;
  for (const auto& d : decls) {
    Tensor t = Tensor::zeros(d.shape, true);
    switch (d.role) {
      case ParamRole::kConvWeight: {
        const double fan_out = static_cast<double>(d.shape.n * d.shape.h * d.shape.w);
        const double stddev = std::sqrt(2.0 / fan_out);
        for (float& v : t.mutable_data()) v = static_cast<float>(stddev * rng.normal());
        break;
      }
      case ParamRole::kGamma:
        for (float& v : t.mutable_data()) v = 1.0f;
        break;
      case ParamRole::kBias:
      case ParamRole::kBeta:
        break;
    }
    set.add(d.name, d.role, std::move(t));
  }
  return set;
}

namespace {

bool same_bits(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

}  // namespace

bool bitwise_equal(const ParamSet& a, const ParamSet& b) {
  if (a.params().size() != b.params().size() || a.buffers().size() != b.buffers().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& pa = a.params()[i];
    const auto& pb = b.params()[i];
    if (pa.name != pb.name || pa.role != pb.role || !same_bits(pa.value, pb.value) ||
        !same_bits(pa.velocity, pb.velocity)) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.buffers().size(); ++i) {
    if (a.buffers()[i].name != b.buffers()[i].name ||
        !same_bits(a.buffers()[i].value, b.buffers()[i].value)) {
      return false;
    }
  }
  return true;
}

}  // namespace ikshana
