#include "eqn/metropolis.hpp"

#include <cmath>

#include "eqn/errors.hpp"

namespace eqn {

double transition_log_ratio(const TransitionRecord& rec) {
  if (!rec.det_ok) return kNegInf;
  const double alpha = rec.alpha;
  const double s2 = 1.0 - alpha * alpha;
  double noise = 0.0;
  if (s2 > 0.0) {
    // reverse innovation a p_hat - p_two4, forward innovation p_hat - a p_two4
    double rev2 = 0.0, fwd2 = 0.0;
    for (std::size_t i = 0; i < rec.p_hat.size(); ++i) {
      const double r = alpha * rec.p_hat[i] - rec.p_two4[i];
      const double f = rec.p_hat[i] - alpha * rec.p_two4[i];
      rev2 += r * r;
      fwd2 += f * f;
    }
    noise = (fwd2 - rev2) / (2.0 * s2);
  }
  return noise + rec.logdet_plus - rec.logdet_minus;
}

namespace {

double log_pi_hat(const BlockTarget& target, const WalkerState& s) {
  return target.log_density(s.q) - 0.5 * kernels::sumsq(s.p);
}

}  // namespace

TrajectoryResult metropolis_trajectory(const BlockTarget& target, WalkerState start,
                                       int n_steps, WalkerPreconditioner& b,
                                       const SamplerConfig& config, RandomSource& rng,
                                       Vec* grad_cache) {
  if (n_steps < 1) throw std::invalid_argument("metropolis_trajectory: n_steps >= 1");

  const double start_log = log_pi_hat(target, start);
  Vec entry_grad;
  if (grad_cache) entry_grad = *grad_cache;

  TrajectoryResult out;
  out.steps = n_steps;

  WalkerState cur = start;
  double ratio_sum = 0.0;
  bool failed = false;
  Vec grad = grad_cache ? *grad_cache : Vec{};
  for (int s = 0; s < n_steps && !failed; ++s) {
    try {
      auto step = eqn_step(target, cur, b, config, rng,
                           grad.empty() ? nullptr : &grad, /*want_record=*/true);
      const double r = transition_log_ratio(step.record);
      if (!std::isfinite(r) && r < 0) failed = true;  // singular Jacobian
      ratio_sum += r;
      cur = std::move(step.state);
      grad = std::move(step.grad_end);
    } catch (const StepError&) {
      failed = true;
    }
  }

  double total = kNegInf;
  if (!failed) {
    total = log_pi_hat(target, cur) - start_log + ratio_sum;
    out.log_accept = total;
  } else {
    out.log_accept = kNegInf;
  }

  if (!failed && std::log(rng.uniform()) < total) {
    out.accepted = true;
    out.state = std::move(cur);
    if (grad_cache) *grad_cache = std::move(grad);
    return out;
  }

  // reject the move and flip the sign of the momentum
  out.accepted = false;
  out.state.q = std::move(start.q);
  out.state.p = std::move(start.p);
  for (auto& v : out.state.p) v = -v;
  if (grad_cache) *grad_cache = std::move(entry_grad);  // gradient at q unchanged
  return out;
}

TrajectoryResult plain_trajectory(const BlockTarget& target, WalkerState start,
                                  int n_steps, WalkerPreconditioner& b,
                                  const SamplerConfig& config, RandomSource& rng,
                                  Vec* grad_cache) {
  if (n_steps < 1) throw std::invalid_argument("plain_trajectory: n_steps >= 1");
  TrajectoryResult out;
  out.steps = n_steps;

  Vec entry_grad;
  if (grad_cache) entry_grad = *grad_cache;
  WalkerState cur = start;
  Vec grad = grad_cache ? *grad_cache : Vec{};
  try {
    for (int s = 0; s < n_steps; ++s) {
      auto step = eqn_step(target, cur, b, config, rng,
                           grad.empty() ? nullptr : &grad, /*want_record=*/false);
      cur = std::move(step.state);
      grad = std::move(step.grad_end);
    }
  } catch (const StepError&) {
    out.accepted = false;
    out.state.q = std::move(start.q);
    out.state.p = std::move(start.p);
    for (auto& v : out.state.p) v = -v;
    if (grad_cache) *grad_cache = std::move(entry_grad);
    return out;
  }
  out.accepted = true;
  out.state = std::move(cur);
  if (grad_cache) *grad_cache = std::move(grad);
  return out;
}

TrajectoryResult run_iteration(const BlockTarget& target, WalkerState start,
                               WalkerPreconditioner& b, const SamplerConfig& config,
                               RandomSource& rng, Vec* grad_cache) {
  if (config.metropolize)
    return metropolis_trajectory(target, std::move(start), config.steps_per_iteration,
                                 b, config, rng, grad_cache);
  return plain_trajectory(target, std::move(start), config.steps_per_iteration, b,
                          config, rng, grad_cache);
}

}  // namespace eqn
