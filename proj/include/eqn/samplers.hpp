#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "eqn/precond.hpp"
#include "eqn/rng.hpp"
#include "eqn/targets.hpp"
#include "eqn/vec.hpp"

namespace eqn {

enum class DivergenceMode { analytic, noisy, omitted };

std::string to_string(DivergenceMode m);
DivergenceMode divergence_mode_from_string(const std::string& s);

struct SamplerConfig {
  double h = 0.1;
  double gamma = 1.0;
  int steps_per_iteration = 1;
  bool metropolize = true;
  DivergenceMode divergence = DivergenceMode::analytic;
  double implicit_tol = 1e-10;
  int implicit_max_iter = 50;
  double implicit_damping = 1.0;
  double noisy_eps = 1e-4;
  int noisy_samples = 1;
  // Use the compact O-step divergence placement (single (alpha+1)h/2 term)
  // instead of the split half-kick form.  Equivalent order; default off.
  bool compact_o_divergence = false;

  double alpha() const { return std::exp(-gamma * h); }
  // Running without Metropolis and without the divergence term does not
  // sample pi exactly even as h -> 0; traces carry this flag.
  bool biased() const { return !metropolize && divergence == DivergenceMode::omitted; }
  void validate() const;
};

struct WalkerState {
  Vec q, p;
};

// The density/gradient pair a stepping kernel sees.  For Gibbs updates these
// are closures over a coordinate block of the full state.
struct BlockTarget {
  int dim = 0;
  std::function<double(ConstSpan)> log_density;
  std::function<void(ConstSpan, MutSpan)> gradient;

  static BlockTarget whole(const TargetDensity& t);
};

// --------------------------------------------------------------------------
// Baseline kernels

// Euler-Maruyama overdamped step: x + h grad + sqrt(2h) R.
Vec overdamped_step(const BlockTarget& target, ConstSpan x, double h,
                    RandomSource& rng);
Vec overdamped_step(const TargetDensity& target, ConstSpan x, double h,
                    RandomSource& rng);

struct MalaResult {
  Vec x;
  bool accepted;
};
MalaResult mala_step(const BlockTarget& target, ConstSpan x, double h,
                     RandomSource& rng);
MalaResult mala_step(const TargetDensity& target, ConstSpan x, double h,
                     RandomSource& rng);

struct HmcResult {
  Vec q;
  bool accepted;
  double energy_error;  // H(end) - H(start) along the proposed path
};
HmcResult hmc_step(const BlockTarget& target, ConstSpan q, double h,
                   int n_leapfrog, RandomSource& rng, const Vec* grad_cache = nullptr,
                   Vec* grad_out = nullptr);

// --------------------------------------------------------------------------
// Preconditioned underdamped step (the seven-substep discretization)

// Cached quantities from one step, enough to assemble the transition ratio.
struct TransitionRecord {
  Vec r;          // O-step noise draw
  Vec p_quarter;  // after the first kick
  Vec p_two4;     // after the pre-O divergence half-kick
  Vec p_hat;      // after the O-step
  Vec p_three4;   // after the post-O divergence half-kick
  Vec q_half;
  double logdet_plus = 0.0;   // log |I + (h/2) d(B p_three4)/dq| at q_half
  double logdet_minus = 0.0;  // log |I - (h/2) d(B p_quarter)/dq| at q_half
  bool det_ok = true;
  double alpha = 1.0;
};

struct EqnStepResult {
  WalkerState state;
  TransitionRecord record;  // populated when want_record
  Vec grad_end;             // gradient at the final position, for reuse
  int implicit_iterations = 0;
};

// One step of the preconditioned scheme.  grad_cache, when given, must hold
// the gradient at state.q (one fresh gradient evaluation per step then).
EqnStepResult eqn_step(const BlockTarget& target, const WalkerState& state,
                       WalkerPreconditioner& b, const SamplerConfig& config,
                       RandomSource& rng, const Vec* grad_cache = nullptr,
                       bool want_record = false);

// Standard underdamped BAOAB step; identical arithmetic to eqn_step with the
// identity preconditioner.
EqnStepResult baoab_step(const BlockTarget& target, const WalkerState& state,
                         const SamplerConfig& config, RandomSource& rng,
                         const Vec* grad_cache = nullptr);

// Solve q_half = q + (h/2) B(q_half) p by damped fixed-point iteration.
// Leaves the preconditioner positioned at the solution.
struct ImplicitSolveResult {
  Vec q_half;
  int iterations;  // update steps before the residual test passed
  double residual;
};
ImplicitSolveResult implicit_drift_solve(ConstSpan q, ConstSpan p, double h,
                                         WalkerPreconditioner& b,
                                         const SamplerConfig& config);

}  // namespace eqn
