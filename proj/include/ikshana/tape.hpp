#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ikshana/tensor.hpp"

namespace ikshana {

/// Records differentiable operations in execution order and replays them in
/// reverse to compute gradients.
///
/// A tape records only while a `GradTape::Scope` for it is alive on the
/// calling thread, and only operations with at least one input that
/// requires a gradient. After `backward` the tape is consumed; call `reset`
/// before recording the next step.
template <typename T>
class GradTape {
 public:
  using Storage = detail::TensorStorage<T>;
  using StoragePtr = std::shared_ptr<Storage>;
  /// Receives the gradient of the loss w.r.t. the recorded output and
  /// accumulates into the inputs that require gradients.
  using BackwardFn = std::function<void(std::span<const T> out_grad)>;

  struct Entry {
    std::string op;
    std::vector<StoragePtr> inputs;
    StoragePtr output;
    BackwardFn backward;
  };

  class Scope {
   public:
    explicit Scope(GradTape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* previous_;
  };

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  /// Tape currently recording on this thread, or nullptr.
  static GradTape* active();

  void record(std::string op, std::vector<StoragePtr> inputs, StoragePtr output,
              BackwardFn backward);

  /// Populates `grad` on every requires-grad leaf referenced by the tape
  /// with d(loss)/d(leaf). Throws std::logic_error when `loss` is not a
  /// single element, was not produced on this tape, or the tape has already
  /// been consumed.
  void backward(const BasicTensor<T>& loss);

  /// Drops every entry so the tape can record again.
  void reset();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  bool consumed_ = false;
  static thread_local GradTape* active_;
};

template <typename T>
thread_local GradTape<T>* GradTape<T>::active_ = nullptr;

/// Runs backward on the tape active on this thread.
template <typename T>
void backward(const BasicTensor<T>& loss);

namespace detail {

/// Gradient buffer for `s`, allocated as zeros on first use.
template <typename T>
std::span<T> grad_buffer(TensorStorage<T>& s) {
  if (s.grad.empty()) s.grad.assign(s.data.size(), T(0));
  return s.grad;
}

/// Tape to record on when any of `inputs` requires a gradient.
template <typename T>
GradTape<T>* recording_tape(std::initializer_list<const BasicTensor<T>*> inputs) {
  GradTape<T>* tape = GradTape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

}  // namespace detail

}  // namespace ikshana
