#pragma once

#include "eqn/samplers.hpp"

// Exact-stationarity correction for the discretized preconditioned dynamics:
// accept/reject on whole trajectories with the momentum-flip convention.

namespace eqn {

// The correction term added to the log pi-hat change in the acceptance
// exponent.  Assembled from the O-step density ratio
//   log f_a(a p_hat - p) - log f_a(p_hat - a p),  f_a(x) = exp(-|x|^2/(2(1-a^2)))
// (the reverse and forward O-step innovations) plus the drift Jacobian
// log-determinant difference logdet_plus - logdet_minus.  Returns -inf when
// a Jacobian determinant was not positive (the step is then rejected).
double transition_log_ratio(const TransitionRecord& rec);

struct TrajectoryResult {
  WalkerState state;
  bool accepted = false;
  double log_accept = 0.0;  // acceptance exponent before clamping
  int steps = 0;
};

// Runs n_steps of the preconditioned step from `start`, accumulating the
// log pi-hat change and the per-step transition log-ratios, then accepts the
// whole trajectory with probability min(1, exp(total)).  On rejection the
// walker keeps its position and flips the momentum sign.  Step failures
// (implicit solve divergence, non-positive Jacobians) auto-reject.
//
// grad_cache, when non-null, must hold grad log pi at start.q on entry and
// holds grad log pi at the returned position on exit.
TrajectoryResult metropolis_trajectory(const BlockTarget& target, WalkerState start,
                                       int n_steps, WalkerPreconditioner& b,
                                       const SamplerConfig& config, RandomSource& rng,
                                       Vec* grad_cache = nullptr);

// Same driver without the accept/reject test (the dynamics themselves
// preserve pi up to discretization error).  accepted reports step success.
TrajectoryResult plain_trajectory(const BlockTarget& target, WalkerState start,
                                  int n_steps, WalkerPreconditioner& b,
                                  const SamplerConfig& config, RandomSource& rng,
                                  Vec* grad_cache = nullptr);

// Dispatches on config.metropolize.
TrajectoryResult run_iteration(const BlockTarget& target, WalkerState start,
                               WalkerPreconditioner& b, const SamplerConfig& config,
                               RandomSource& rng, Vec* grad_cache = nullptr);

}  // namespace eqn
