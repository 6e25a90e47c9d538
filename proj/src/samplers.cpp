#include "eqn/samplers.hpp"

#include <cmath>

#include "eqn/errors.hpp"

namespace eqn {

std::string to_string(DivergenceMode m) {
  switch (m) {
    case DivergenceMode::analytic: return "analytic";
    case DivergenceMode::noisy: return "noisy";
    case DivergenceMode::omitted: return "omitted";
  }
  return "?";
}

DivergenceMode divergence_mode_from_string(const std::string& s) {
  if (s == "analytic") return DivergenceMode::analytic;
  if (s == "noisy") return DivergenceMode::noisy;
  if (s == "omitted") return DivergenceMode::omitted;
  throw ConfigError("unknown divergence mode '" + s + "'", "divergence");
}

void SamplerConfig::validate() const {
  if (h <= 0.0) throw ConfigError("stepsize h must be positive", "h");
  if (gamma < 0.0) throw ConfigError("friction gamma must be >= 0", "gamma");
  if (steps_per_iteration < 1)
    throw ConfigError("steps_per_iteration must be >= 1", "steps_per_iteration");
  if (implicit_tol <= 0.0) throw ConfigError("implicit_tol must be positive", "implicit_tol");
  if (implicit_max_iter < 1)
    throw ConfigError("implicit_max_iter must be >= 1", "implicit_max_iter");
  if (implicit_damping <= 0.0 || implicit_damping > 1.0)
    throw ConfigError("implicit_damping must lie in (0,1]", "implicit_damping");
  if (noisy_eps <= 0.0) throw ConfigError("noisy_eps must be positive", "noisy_eps");
  if (noisy_samples < 1) throw ConfigError("noisy_samples must be >= 1", "noisy_samples");
}

Vec overdamped_step(const TargetDensity& target, ConstSpan x, double h,
                    RandomSource& rng) {
  return overdamped_step(BlockTarget::whole(target), x, h, rng);
}

MalaResult mala_step(const TargetDensity& target, ConstSpan x, double h,
                     RandomSource& rng) {
  return mala_step(BlockTarget::whole(target), x, h, rng);
}

BlockTarget BlockTarget::whole(const TargetDensity& t) {
  BlockTarget b;
  b.dim = t.dim();
  b.log_density = [&t](ConstSpan x) { return t.log_density(x); };
  b.gradient = [&t](ConstSpan x, MutSpan out) { t.gradient(x, out); };
  return b;
}

// ---------------------------------------------------------------------------
// baselines

Vec overdamped_step(const BlockTarget& target, ConstSpan x, double h,
                    RandomSource& rng) {
  if (h <= 0.0) throw std::invalid_argument("overdamped_step: h must be positive");
  Vec next(x.begin(), x.end());
  Vec grad(x.size());
  target.gradient(x, grad);
  kernels::axpy(h, grad, next);
  const double s = std::sqrt(2.0 * h);
  for (auto& v : next) v += s * rng.normal();
  return next;
}

MalaResult mala_step(const BlockTarget& target, ConstSpan x, double h,
                     RandomSource& rng) {
  if (h <= 0.0) throw std::invalid_argument("mala_step: h must be positive");
  const std::size_t n = x.size();
  Vec gx(n);
  target.gradient(x, gx);
  Vec prop(x.begin(), x.end());
  kernels::axpy(h, gx, prop);
  const double s = std::sqrt(2.0 * h);
  for (auto& v : prop) v += s * rng.normal();

  const double lx = target.log_density(x);
  const double ly = target.log_density(prop);
  Vec gy(n);
  target.gradient(prop, gy);

  // log q(a | b) = -|a - b - h grad(b)|^2 / (4h)
  Vec d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = prop[i] - x[i] - h * gx[i];
  const double fwd = -kernels::sumsq(d) / (4.0 * h);
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - prop[i] - h * gy[i];
  const double rev = -kernels::sumsq(d) / (4.0 * h);

  const double log_a = ly - lx + rev - fwd;
  if (std::log(rng.uniform()) < log_a) return {std::move(prop), true};
  return {Vec(x.begin(), x.end()), false};
}

HmcResult hmc_step(const BlockTarget& target, ConstSpan q, double h,
                   int n_leapfrog, RandomSource& rng, const Vec* grad_cache,
                   Vec* grad_out) {
  if (n_leapfrog < 1) throw std::invalid_argument("hmc_step: n_leapfrog must be >= 1");
  const std::size_t n = q.size();
  Vec p(n);
  rng.fill_normal(p);
  const double h0 = -target.log_density(q) + 0.5 * kernels::sumsq(p);

  Vec pos(q.begin(), q.end());
  Vec grad(n);
  if (grad_cache)
    copy_into(*grad_cache, grad);
  else
    target.gradient(pos, grad);

  kernels::axpy(0.5 * h, grad, p);
  for (int step = 0; step < n_leapfrog; ++step) {
    kernels::axpy(h, p, pos);
    target.gradient(pos, grad);
    kernels::axpy(step + 1 < n_leapfrog ? h : 0.5 * h, grad, p);
  }

  const double h1 = -target.log_density(pos) + 0.5 * kernels::sumsq(p);
  const double denergy = h1 - h0;
  if (std::log(rng.uniform()) < -denergy) {
    if (grad_out) *grad_out = grad;
    return {std::move(pos), true, denergy};
  }
  if (grad_out && grad_cache) *grad_out = *grad_cache;
  else if (grad_out) target.gradient(q, *grad_out);
  return {Vec(q.begin(), q.end()), false, denergy};
}

// ---------------------------------------------------------------------------
// preconditioned underdamped step

ImplicitSolveResult implicit_drift_solve(ConstSpan q, ConstSpan p, double h,
                                         WalkerPreconditioner& b,
                                         const SamplerConfig& config) {
  const std::size_t n = q.size();
  Vec x(q.begin(), q.end());
  Vec bp(n), r(n);
  const double half_h = 0.5 * h;
  for (int it = 0; it <= config.implicit_max_iter; ++it) {
    b.set_position(x);
    b.apply(p, bp);
    double rn2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = q[i] + half_h * bp[i] - x[i];
      rn2 += r[i] * r[i];
    }
    if (std::sqrt(rn2) <= config.implicit_tol)
      return {std::move(x), it, std::sqrt(rn2)};
    if (it == config.implicit_max_iter)
      throw StepError("implicit drift solve did not converge (residual " +
                          std::to_string(std::sqrt(rn2)) + ")",
                      std::sqrt(rn2));
    kernels::axpy(config.implicit_damping, r, x);
  }
  throw std::logic_error("unreachable");
}

namespace {

// div(B(q)^T) at the preconditioner's current position.
void divergence_term(WalkerPreconditioner& b, ConstSpan q_half,
                     const SamplerConfig& config, RandomSource& rng, MutSpan out) {
  switch (config.divergence) {
    case DivergenceMode::omitted:
      fill_zero(out);
      return;
    case DivergenceMode::analytic:
      b.divergence(out);
      return;
    case DivergenceMode::noisy: {
      if (!b.position_dependent()) {
        fill_zero(out);
        return;
      }
      MatrixFieldApply field = [&b](ConstSpan q, ConstSpan v, MutSpan o) {
        b.set_position(q);
        b.apply_transpose(v, o);
      };
      Vec est = noisy_divergence(field, q_half, config.noisy_eps,
                                 config.noisy_samples, rng);
      b.set_position(q_half);  // estimator moved the operator around
      copy_into(est, out);
      return;
    }
  }
}

}  // namespace

EqnStepResult eqn_step(const BlockTarget& target, const WalkerState& state,
                       WalkerPreconditioner& b, const SamplerConfig& config,
                       RandomSource& rng, const Vec* grad_cache, bool want_record) {
  const std::size_t n = state.q.size();
  const double h = config.h;
  const double half_h = 0.5 * h;
  const double alpha = config.alpha();

  EqnStepResult res;
  res.record.alpha = alpha;

  // (B1) half kick with F(q) = B(q)^T grad log pi(q)
  b.set_position(state.q);
  Vec grad(n);
  if (grad_cache)
    copy_into(*grad_cache, grad);
  else
    target.gradient(state.q, grad);
  Vec f(n);
  b.apply_transpose(grad, f);
  Vec p_quarter = state.p;
  kernels::axpy(half_h, f, p_quarter);

  // (A1) implicit half drift
  auto solve = implicit_drift_solve(state.q, p_quarter, h, b, config);
  Vec q_half = std::move(solve.q_half);
  res.implicit_iterations = solve.iterations;

  // divergence of B^T at the midpoint, computed once per step
  Vec div(n, 0.0);
  const bool compact = config.compact_o_divergence;
  if (config.divergence != DivergenceMode::omitted)
    divergence_term(b, q_half, config, rng, div);

  // (xB) pre-O divergence half kick (skipped in the compact form)
  Vec p_two4 = p_quarter;
  if (!compact) kernels::axpy(half_h, div, p_two4);

  // (O) Ornstein-Uhlenbeck momentum update
  Vec r(n);
  rng.fill_normal(r);
  Vec p_hat(n);
  const double noise_scale = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));
  for (std::size_t i = 0; i < n; ++i) p_hat[i] = alpha * p_two4[i] + noise_scale * r[i];
  if (compact) kernels::axpy(0.5 * (alpha + 1.0) * h, div, p_hat);

  // (xB2) post-O divergence half kick
  Vec p_three4 = p_hat;
  if (!compact) kernels::axpy(half_h, div, p_three4);

  // Jacobian determinants for the Metropolis ratio, at the midpoint
  if (want_record) {
    auto plus = b.logdet_drift_jacobian(p_three4, half_h);
    auto minus = b.logdet_drift_jacobian(p_quarter, -half_h);
    if (plus && minus) {
      res.record.logdet_plus = *plus;
      res.record.logdet_minus = *minus;
    } else {
      res.record.det_ok = false;
    }
  }

  // (B2) explicit half drift
  Vec q_next = q_half;
  Vec bp(n);
  b.apply(p_three4, bp);
  kernels::axpy(half_h, bp, q_next);

  // final half kick with a fresh gradient
  b.set_position(q_next);
  res.grad_end.resize(n);
  target.gradient(q_next, res.grad_end);
  b.apply_transpose(res.grad_end, f);
  Vec p_next = p_three4;
  kernels::axpy(half_h, f, p_next);

  res.state.q = std::move(q_next);
  res.state.p = std::move(p_next);
  if (want_record) {
    res.record.r = std::move(r);
    res.record.p_quarter = std::move(p_quarter);
    res.record.p_two4 = std::move(p_two4);
    res.record.p_hat = std::move(p_hat);
    res.record.p_three4 = std::move(p_three4);
    res.record.q_half = std::move(q_half);
  }
  return res;
}

EqnStepResult baoab_step(const BlockTarget& target, const WalkerState& state,
                         const SamplerConfig& config, RandomSource& rng,
                         const Vec* grad_cache) {
  auto id = identity_preconditioner(static_cast<int>(state.q.size()));
  return eqn_step(target, state, *id, config, rng, grad_cache, false);
}

}  // namespace eqn
