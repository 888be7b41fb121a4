#pragma once

#include <limits>

#include "ikshana/params.hpp"

namespace ikshana {

/// SGD with Nesterov momentum, applied to every parameter:
///   v <- mu * v + g
///   p <- p - lr * (g + mu * v)
/// Throws std::logic_error if a parameter has no gradient.
void sgd_nesterov_step(ParamSet& params, double lr, double momentum);

/// Reduce-on-plateau state for a metric that should decrease.
struct SchedulerState {
  double current_lr = 1e-6;
  double best_metric = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  double factor = 0.5;
  int patience = 20;
  double threshold = 1e-4;  // relative

  bool operator==(const SchedulerState&) const = default;
};

/// Observes one epoch's metric. An observation improves when it is below
/// best * (1 - threshold); otherwise the counter grows and, once it exceeds
/// `patience`, the learning rate is multiplied by `factor` and the counter
/// restarts.
SchedulerState plateau_step(SchedulerState state, double observed_metric);

}  // namespace ikshana
