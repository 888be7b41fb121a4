#include "ikshana/optim.hpp"

#include <stdexcept>

namespace ikshana {

void sgd_nesterov_step(ParamSet& params, double lr, double momentum) {
  for (const auto& p : params.params()) {
    if (!p.value.has_grad()) throw std::logic_error("sgd_nesterov_step: missing gradient for " + p.name);
  }
  const auto mu = static_cast<float>(momentum);
  const auto rate = static_cast<float>(lr);
  for (auto& p : params.params()) {
    auto value = p.value.mutable_data();
    auto velocity = p.velocity.mutable_data();
    const auto grad = p.value.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      velocity[i] = mu * velocity[i] + grad[i];
      value[i] = value[i] - rate * (grad[i] + mu * velocity[i]);
    }
  }
}

SchedulerState plateau_step(SchedulerState state, double observed_metric) {
  if (observed_metric < state.best_metric * (1.0 - state.threshold)) {
    state.best_metric = observed_metric;
    state.epochs_since_improvement = 0;
  } else {
    ++state.epochs_since_improvement;
  }
  if (state.epochs_since_improvement > state.patience) {
    state.current_lr *= state.factor;
    state.epochs_since_improvement = 0;
  }
  return state;
}

}  // namespace ikshana
