#pragma once

#include <memory>
#include <optional>
#include <string>

#include "eqn/lowrank.hpp"
#include "eqn/vec.hpp"

// Per-walker preconditioners B_i assembled from the positions of walkers in
// other groups: plain identity, the ensemble-covariance root, the
// identity-blended covariance root, and the locality-weighted variant with
// analytic q-derivatives for the divergence and Metropolis terms.

namespace eqn {

enum class PrecondMode { identity, global, blended, local };

enum class WeightMetric { covariance, inverse_covariance, euclidean };

std::string to_string(PrecondMode m);
std::string to_string(WeightMetric m);
PrecondMode precond_mode_from_string(const std::string& s);
WeightMetric weight_metric_from_string(const std::string& s);

struct PreconditionerSpec {
  PrecondMode mode = PrecondMode::identity;
  double mu = 0.0;      // blend weight
  double lambda = 0.0;  // locality
  WeightMetric metric = WeightMetric::inverse_covariance;
  std::vector<int> weight_coords;  // empty: all coordinates enter the kernel
};

// Quadratic form used inside the locality kernel; empty matrix = Euclidean.
struct ScalingForm {
  std::vector<int> coords;  // empty = all coordinates
  Vec matrix;               // coords.size()^2 row-major; empty = identity

  double distance2(ConstSpan a, ConstSpan b) const;
};

// Locality weights w_j = exp(-(lambda/2) ||Q_j - q||^2_S), unnormalized.
Vec locality_weights(const std::vector<ConstSpan>& samples, ConstSpan q,
                     double lambda, const ScalingForm& s);

// Scaling form for the configured metric, estimated from the samples.
ScalingForm make_scaling(const PreconditionerSpec& spec,
                         const std::vector<ConstSpan>& samples, int dim);

// The operator handed to the stepping kernel for one walker.
class WalkerPreconditioner {
 public:
  virtual ~WalkerPreconditioner() = default;

  virtual int dim() const noexcept = 0;

  // True when B depends on the walker's own position (local mode, lambda>0).
  virtual bool position_dependent() const noexcept = 0;

  // Rebuild cached state at position q.  No-op for position-independent B.
  virtual void set_position(ConstSpan q) = 0;

  virtual void apply(ConstSpan v, MutSpan out) const = 0;            // B v
  virtual void apply_transpose(ConstSpan v, MutSpan out) const = 0;  // B^T v

  // div(B(q)^T) at the current position (zero unless position-dependent).
  virtual void divergence(MutSpan out) const = 0;

  // log |det(I + coef d(B(q)p)/dq)| at the current position; nullopt when the
  // determinant is not positive.  Zero for position-independent modes.
  virtual std::optional<double> logdet_drift_jacobian(ConstSpan p, double coef) const = 0;

  // Analytic d/dq_j of B B^T as a symmetric low-rank action (zero except in
  // local mode).  Exposed for tests.
  virtual SymmetricLowRank d_bbt(int coord) const = 0;

  Vec apply(ConstSpan v) const {
    Vec out(v.size());
    apply(v, out);
    return out;
  }
};

// Build walker i's preconditioner from the complement sample set (positions
// of walkers outside i's group, restricted to the active coordinate block).
std::unique_ptr<WalkerPreconditioner> build_preconditioner(
    const PreconditionerSpec& spec, const std::vector<ConstSpan>& complement,
    ConstSpan q_i, int walker_index);

std::unique_ptr<WalkerPreconditioner> identity_preconditioner(int dim);

}  // namespace eqn
