#include "eqn/precond.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "eqn/errors.hpp"

namespace eqn {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

}  // namespace

std::string to_string(PrecondMode m) {
  switch (m) {
    case PrecondMode::identity: return "identity";
    case PrecondMode::global: return "global";
    case PrecondMode::blended: return "blended";
    case PrecondMode::local: return "local";
  }
  return "?";
}

std::string to_string(WeightMetric m) {
  switch (m) {
    case WeightMetric::covariance: return "covariance";
    case WeightMetric::inverse_covariance: return "inverse_covariance";
    case WeightMetric::euclidean: return "euclidean";
  }
  return "?";
}

PrecondMode precond_mode_from_string(const std::string& s) {
  if (s == "identity") return PrecondMode::identity;
  if (s == "global") return PrecondMode::global;
  if (s == "blended") return PrecondMode::blended;
  if (s == "local") return PrecondMode::local;
  throw ConfigError("unknown preconditioner mode '" + s + "'", "mode");
}

WeightMetric weight_metric_from_string(const std::string& s) {
  if (s == "covariance") return WeightMetric::covariance;
  if (s == "inverse_covariance") return WeightMetric::inverse_covariance;
  if (s == "euclidean") return WeightMetric::euclidean;
  throw ConfigError("unknown weight metric '" + s + "'", "weight_metric");
}

double ScalingForm::distance2(ConstSpan a, ConstSpan b) const {
  const std::size_t nc = coords.empty() ? a.size() : coords.size();
  auto coord = [&](std::size_t j) { return coords.empty() ? int(j) : coords[j]; };
  if (matrix.empty()) {
    double s = 0.0;
    for (std::size_t j = 0; j < nc; ++j) {
      const double d = a[coord(j)] - b[coord(j)];
      s += d * d;
    }
    return s;
  }
  Vec d(nc);
  for (std::size_t j = 0; j < nc; ++j) d[j] = a[coord(j)] - b[coord(j)];
  double s = 0.0;
  for (std::size_t r = 0; r < nc; ++r)
    s += d[r] * kernels::dot({matrix.data() + r * nc, nc}, d);
  return s;
}

Vec locality_weights(const std::vector<ConstSpan>& samples, ConstSpan q,
                     double lambda, const ScalingForm& s) {
  if (lambda < 0.0) throw std::invalid_argument("locality weights: lambda must be >= 0");
  Vec w(samples.size(), 1.0);
  if (lambda == 0.0) return w;  // reduces to the unweighted covariance
  for (std::size_t k = 0; k < samples.size(); ++k)
    w[k] = std::exp(-0.5 * lambda * s.distance2(samples[k], q));
  return w;
}

ScalingForm make_scaling(const PreconditionerSpec& spec,
                         const std::vector<ConstSpan>& samples, int dim) {
  ScalingForm s;
  s.coords = spec.weight_coords;
  if (spec.metric == WeightMetric::euclidean || spec.lambda == 0.0) return s;

  const std::size_t nc = s.coords.empty() ? std::size_t(dim) : s.coords.size();
  auto coord = [&](std::size_t j) { return s.coords.empty() ? int(j) : s.coords[j]; };

  // covariance of the samples over the kernel coordinates
  Vec mean(nc, 0.0);
  for (const auto& p : samples)
    for (std::size_t j = 0; j < nc; ++j) mean[j] += p[coord(j)];
  for (auto& v : mean) v /= double(samples.size());
  MatrixXd cov = MatrixXd::Zero(nc, nc);
  VectorXd d(nc);
  for (const auto& p : samples) {
    for (std::size_t j = 0; j < nc; ++j) d[j] = p[coord(j)] - mean[j];
    cov.noalias() += d * d.transpose();
  }
  cov /= double(samples.size());

  MatrixXd form;
  if (spec.metric == WeightMetric::covariance) {
    form = cov;
  } else {
    // Mahalanobis form; pseudo-inverse so rank-deficient sample sets stay usable.
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    VectorXd inv = eig.eigenvalues();
    const double tol = 1e-12 * std::max(inv.maxCoeff(), 0.0);
    for (Eigen::Index i = 0; i < inv.size(); ++i)
      inv[i] = inv[i] > tol ? 1.0 / inv[i] : 0.0;
    form = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  }
  s.matrix.assign(form.data(), form.data() + nc * nc);  // symmetric
  return s;
}

namespace {

class IdentityPrecond final : public WalkerPreconditioner {
 public:
  explicit IdentityPrecond(int dim) : n_(dim) {}
  int dim() const noexcept override { return n_; }
  bool position_dependent() const noexcept override { return false; }
  void set_position(ConstSpan) override {}
  void apply(ConstSpan v, MutSpan out) const override { copy_into(v, out); }
  void apply_transpose(ConstSpan v, MutSpan out) const override { copy_into(v, out); }
  void divergence(MutSpan out) const override { fill_zero(out); }
  std::optional<double> logdet_drift_jacobian(ConstSpan, double) const override {
    return 0.0;
  }
  SymmetricLowRank d_bbt(int) const override { return {}; }

 private:
  int n_;
};

// Ensemble-covariance root for the affine-invariant scheme.  The principal
// root of cov(Q) does not transform as A^{-1} B under q -> A q + v (it picks
// up an orthogonal polar factor), which would break the coupled-trajectory
// equivariance of the sampler.  Anchoring the root to walker differences
// restores it: with V the first N independent centered complement positions
// and T = chol(V^{-1} cov V^{-T}), the root B = V T satisfies B B^T = cov and
// transforms exactly as A^{-1} B.
class GlobalCovRoot final : public WalkerPreconditioner {
 public:
  GlobalCovRoot(const std::vector<ConstSpan>& complement, int walker_index) {
    const int k = static_cast<int>(complement.size());
    if (k < 2)
      throw ConfigError("global preconditioner: complement of walker " +
                        std::to_string(walker_index) + " has fewer than 2 samples");
    n_ = static_cast<int>(complement[0].size());
    if (k <= n_)
      throw RankError("global preconditioner for walker " + std::to_string(walker_index) +
                      ": need more than N=" + std::to_string(n_) +
                      " complement walkers, have K=" + std::to_string(k));

    VectorXd mean = VectorXd::Zero(n_);
    for (const auto& p : complement)
      for (int i = 0; i < n_; ++i) mean[i] += p[i];
    mean /= double(k);

    MatrixXd centered(n_, k);
    for (int c = 0; c < k; ++c)
      for (int i = 0; i < n_; ++i) centered(i, c) = complement[c][i] - mean[i];

    // First N centered columns that are linearly independent, in index order
    // (index-based selection keeps the choice affine-equivariant).
    MatrixXd v(n_, n_);
    MatrixXd ortho(n_, n_);
    int has = 0;
    for (int c = 0; c < k && has < n_; ++c) {
      VectorXd res = centered.col(c);
      const double nrm0 = res.norm();
      if (nrm0 == 0.0) continue;
      for (int pass = 0; pass < 2; ++pass)
        for (int j = 0; j < has; ++j) res -= ortho.col(j).dot(res) * ortho.col(j);
      if (res.norm() > 1e-10 * nrm0) {
        v.col(has) = centered.col(c);
        ortho.col(has) = res / res.norm();
        ++has;
      }
    }
    if (has < n_)
      throw RankError("global preconditioner for walker " + std::to_string(walker_index) +
                      ": complement positions are rank deficient");

    const MatrixXd y = v.partialPivLu().solve(centered);  // V^{-1} C
    const MatrixXd w = (y * y.transpose()) / double(k);
    Eigen::LLT<MatrixXd> llt(w);
    if (llt.info() != Eigen::Success)
      throw RankError("global preconditioner for walker " + std::to_string(walker_index) +
                      ": covariance factorization failed");
    b_ = v * MatrixXd(llt.matrixL());
  }

  int dim() const noexcept override { return n_; }
  bool position_dependent() const noexcept override { return false; }
  void set_position(ConstSpan) override {}
  void apply(ConstSpan v, MutSpan out) const override {
    for (int i = 0; i < n_; ++i) {
      double s = 0.0;
      for (int j = 0; j < n_; ++j) s += b_(i, j) * v[j];
      out[i] = s;
    }
  }
  void apply_transpose(ConstSpan v, MutSpan out) const override {
    for (int j = 0; j < n_; ++j) {
      double s = 0.0;
      for (int i = 0; i < n_; ++i) s += b_(i, j) * v[i];
      out[j] = s;
    }
  }
  void divergence(MutSpan out) const override { fill_zero(out); }
  std::optional<double> logdet_drift_jacobian(ConstSpan, double) const override {
    return 0.0;
  }
  SymmetricLowRank d_bbt(int) const override { return {}; }

 private:
  int n_ = 0;
  MatrixXd b_;
};

// Blended and locality-weighted covariance roots:
//   B(q) = sqrt(I + mu * wcov(Q_[i], w_lambda(Q_[i], q))).
// For lambda = 0 the weights are identically one, B is independent of q and
// the blended/local code paths coincide bitwise.
class LowRankCovRoot final : public WalkerPreconditioner {
 public:
  LowRankCovRoot(const PreconditionerSpec& spec,
                 const std::vector<ConstSpan>& complement, ConstSpan q_i,
                 int walker_index)
      : spec_(spec), n_(static_cast<int>(q_i.size())) {
    if (complement.size() < 2)
      throw ConfigError(to_string(spec.mode) + " preconditioner: complement of walker " +
                        std::to_string(walker_index) + " has fewer than 2 samples");
    if (spec.mu < 0.0) throw ConfigError("preconditioner: mu must be >= 0", "mu");
    if (spec.lambda < 0.0) throw ConfigError("preconditioner: lambda must be >= 0", "lambda");
    if (spec_.mode == PrecondMode::blended) spec_.lambda = 0.0;  // Eq-(9) form has no kernel
    samples_.reserve(complement.size());
    for (const auto& p : complement) samples_.emplace_back(p.begin(), p.end());
    scaling_ = make_scaling(spec, complement, n_);
    rebuild(q_i);
  }

  int dim() const noexcept override { return n_; }
  bool position_dependent() const noexcept override { return spec_.lambda > 0.0; }

  void set_position(ConstSpan q) override {
    if (position_dependent()) rebuild(q);
  }

  void apply(ConstSpan v, MutSpan out) const override { op_.apply(v, out); }
  void apply_transpose(ConstSpan v, MutSpan out) const override { op_.apply(v, out); }

  void divergence(MutSpan out) const override {
    if (!position_dependent()) {
      fill_zero(out);
      return;
    }
    Vec d = divergence_of_sqrt(op_, family_);
    copy_into(d, out);
  }

  std::optional<double> logdet_drift_jacobian(ConstSpan p, double coef) const override {
    if (!position_dependent()) return 0.0;
    return logdet_I_plus_jacobian(op_, family_, p, coef);
  }

  SymmetricLowRank d_bbt(int coord) const override {
    SymmetricLowRank out;
    if (!position_dependent()) return out;
    out.dirs = family_.dirs;
    out.coefs.resize(family_.dirs.size());
    for (std::size_t k = 0; k < family_.dirs.size(); ++k)
      out.coefs[k] = family_.scale[k] * family_.weight_column(k)[coord];
    return out;
  }

  const SqrtOperator& sqrt_op() const noexcept { return op_; }

 private:
  void rebuild(ConstSpan q) {
    const std::size_t k = samples_.size();
    std::vector<ConstSpan> views(samples_.begin(), samples_.end());
    Vec w = locality_weights(views, q, spec_.lambda, scaling_);
    // Normalize by the maximum before use; weight ratios are unchanged and
    // W stays away from zero for walkers far from the whole complement.
    double wmax = 0.0;
    for (double v : w) wmax = std::max(wmax, v);
    for (double& v : w) v /= wmax;
    double wsum = kernels::sum(w);

    Vec mean(n_, 0.0);
    for (std::size_t j = 0; j < k; ++j) kernels::axpy(w[j] / wsum, samples_[j], mean);

    LowRankSPD a;
    a.dim = n_;
    a.base = 1.0;
    a.factors.resize(k);
    a.coefs.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      a.factors[j] = samples_[j];
      kernels::axpy(-1.0, mean, a.factors[j]);
      a.coefs[j] = spec_.mu * w[j] / wsum;
    }
    op_ = SqrtOperator::build(a);

    family_ = SqrtDerivativeFamily{};
    family_.dim = n_;
    if (spec_.lambda > 0.0) {
      // d/dq_j of BB^T = mu * lambda * sum_k w~_k (S c_k)_j c_k c_k^T
      family_.dirs = a.factors;
      family_.scale.resize(k);
      family_.weight.assign(std::size_t(n_) * k, 0.0);
      const auto& coords = scaling_.coords;
      const std::size_t nc = coords.empty() ? std::size_t(n_) : coords.size();
      auto coord = [&](std::size_t j) { return coords.empty() ? int(j) : coords[j]; };
      for (std::size_t j = 0; j < k; ++j) {
        family_.scale[j] = spec_.mu * spec_.lambda * (w[j] / wsum);
        double* col = family_.weight.data() + j * std::size_t(n_);
        const Vec& c = a.factors[j];
        if (scaling_.matrix.empty()) {
          for (std::size_t t = 0; t < nc; ++t) col[coord(t)] = c[coord(t)];
        } else {
          for (std::size_t r = 0; r < nc; ++r) {
            double s = 0.0;
            for (std::size_t t = 0; t < nc; ++t)
              s += scaling_.matrix[r * nc + t] * c[coord(t)];
            col[coord(r)] = s;
          }
        }
      }
    }
  }

  PreconditionerSpec spec_;
  int n_;
  std::vector<Vec> samples_;
  ScalingForm scaling_;
  SqrtOperator op_;
  SqrtDerivativeFamily family_;
};

}  // namespace

std::unique_ptr<WalkerPreconditioner> identity_preconditioner(int dim) {
  return std::make_unique<IdentityPrecond>(dim);
}

std::unique_ptr<WalkerPreconditioner> build_preconditioner(
    const PreconditionerSpec& spec, const std::vector<ConstSpan>& complement,
    ConstSpan q_i, int walker_index) {
  switch (spec.mode) {
    case PrecondMode::identity:
      return identity_preconditioner(static_cast<int>(q_i.size()));
    case PrecondMode::global:
      return std::make_unique<GlobalCovRoot>(complement, walker_index);
    case PrecondMode::blended:
    case PrecondMode::local:
      return std::make_unique<LowRankCovRoot>(spec, complement, q_i, walker_index);
  }
  throw std::logic_error("unreachable");
}

}  // namespace eqn
