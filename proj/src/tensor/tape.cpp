#include "ikshana/tape.hpp"

#include <stdexcept>
#include <unordered_set>

namespace ikshana {

template <typename T>
GradTape<T>::Scope::Scope(GradTape& tape) : previous_(active_) {
  active_ = &tape;
}

template <typename T>
GradTape<T>::Scope::~Scope() {
  active_ = previous_;
}

template <typename T>
GradTape<T>* GradTape<T>::active() {
  return active_;
}

template <typename T>
void GradTape<T>::record(std::string op, std::vector<StoragePtr> inputs, StoragePtr output,
                         BackwardFn backward) {
  if (consumed_) throw std::logic_error("recording on a consumed tape; call reset() first");
  output->requires_grad = true;
  output->leaf = false;
  entries_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void GradTape<T>::backward(const BasicTensor<T>& loss) {
  if (consumed_) throw std::logic_error("backward called twice without reset");
  if (!loss.defined() || loss.numel() != 1) {
    throw std::logic_error("backward requires a single-element loss");
  }
  const Storage* target = loss.storage().get();
  std::size_t last = entries_.size();
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].output.get() == target) {
      last = i;
      break;
    }
  }
  if (last == entries_.size()) {
    throw std::logic_error("loss was not produced by an operation on this tape");
  }

  // Fresh gradients for this pass: leaves restart at zero, intermediates
  // are allocated when something flows into them.
  std::unordered_set<Storage*> seen;
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (in->leaf && in->requires_grad && seen.insert(in.get()).second) {
        in->grad.assign(in->data.size(), T(0));
      }
    }
    if (!e.output->leaf) e.output->grad.clear();
  }
  loss.storage()->grad.assign(1, T(1));

  for (std::size_t i = last + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (e.output->grad.empty()) continue;
    e.backward(e.output->grad);
    if (e.output.get() != target) {
      e.output->grad.clear();
      e.output->grad.shrink_to_fit();
    }
  }
  consumed_ = true;
}

template <typename T>
void GradTape<T>::reset() {
  entries_.clear();
  consumed_ = false;
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  GradTape<T>* tape = GradTape<T>::active();
  if (tape == nullptr) throw std::logic_error("backward without an active tape");
  tape->backward(loss);
}

template class GradTape<float>;
template class GradTape<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace ikshana
