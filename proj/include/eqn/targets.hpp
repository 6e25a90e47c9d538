#pragma once

#include <limits>
#include <memory>
#include <string>

#include "eqn/rng.hpp"
#include "eqn/vec.hpp"

namespace eqn {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// A target density pi on R^N, known up to an additive constant, with an
// analytic gradient of log pi.  Implementations are immutable after
// construction and safe for concurrent read-only evaluation.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;

  int dim() const noexcept { return dim_; }
  const std::string& name() const noexcept { return name_; }

  // log pi(x) up to a constant fixed per instance.  Out-of-support points
  // return -inf, never NaN.
  virtual double log_density(ConstSpan x) const = 0;

  // grad log pi(x); out-of-support points raise DomainError.
  virtual void gradient(ConstSpan x, MutSpan out) const = 0;
  Vec gradient(ConstSpan x) const;

  // Block-restricted gradient for Gibbs updates: out[j] = d log pi / d x[idx[j]].
  // The default evaluates the full gradient; targets with cheaper per-block
  // derivatives override this.
  virtual void gradient_block(ConstSpan x, std::span<const int> idx, MutSpan out) const;

  // Optional exact or prior draw used by ensemble initialization.
  virtual bool can_sample_init() const { return false; }
  virtual Vec sample_init(RandomSource& rng) const;

 protected:
  TargetDensity(int dim, std::string name);
  void check_dim(ConstSpan x) const;

 private:
  int dim_;
  std::string name_;
};

// Zero-mean Gaussian with covariance M; log density -x^T M^{-1} x / 2,
// normalized so the mode evaluates to 0.
class GaussianTarget final : public TargetDensity {
 public:
  // Diagonal covariance.
  explicit GaussianTarget(Vec variances);
  // Dense SPD covariance, row-major.
  GaussianTarget(int dim, Vec covariance);

  using TargetDensity::gradient;
  double log_density(ConstSpan x) const override;
  void gradient(ConstSpan x, MutSpan out) const override;

  bool can_sample_init() const override { return true; }
  Vec sample_init(RandomSource& rng) const override;  // exact draw from pi

  double condition_number() const noexcept { return cond_; }
  // Applies M^{-1}.
  void precision_apply(ConstSpan x, MutSpan out) const;

 private:
  bool diagonal_;
  Vec var_;        // diagonal case
  Vec prec_;       // dense precision, row-major
  Vec chol_;       // dense lower Cholesky factor of M (for sampling)
  double cond_ = 1.0;
};

// Rotationally symmetric shell: log pi = -(|x| - r0)^2 / (2 s^2).
class RingTarget final : public TargetDensity {
 public:
  RingTarget(double radius, double width, int dim = 2);

  using TargetDensity::gradient;
  double log_density(ConstSpan x) const override;
  void gradient(ConstSpan x, MutSpan out) const override;

  double radius() const noexcept { return r0_; }

 private:
  double r0_, s_;
};

// Three-component univariate Gaussian mixture posterior in a 9-dimensional
// unconstrained embedding:
//   theta = (mu1, mu2, mu3, log l1, log l2, log l3, t1, t2, log beta)
// where l_k are component precisions, (t1, t2) is a stick-breaking embedding
// of the weight simplex, and beta is the precision-prior rate hyperparameter.
// The log-Jacobian of the embedding is added to the log posterior.
class MixtureModelTarget final : public TargetDensity {
 public:
  struct Params {
    double mu[3];
    double lambda[3];
    double z[3];
    double beta;
  };

  explicit MixtureModelTarget(Vec data);

  using TargetDensity::gradient;
  double log_density(ConstSpan x) const override;
  void gradient(ConstSpan x, MutSpan out) const override;

  bool can_sample_init() const override { return true; }
  Vec sample_init(RandomSource& rng) const override;  // prior draw

  // Unconstrained embedding and its inverse.
  static Vec embed(const Params& p);
  static Params unpack(ConstSpan theta);

  // Draw n points from the mixture density with the given parameters.
  static Vec generate_synthetic(int n, const Params& truth, std::uint64_t seed);

  const Vec& data() const noexcept { return y_; }
  double mean_y() const noexcept { return m_; }
  double range_y() const noexcept { return r_; }

  // prior constants from the data: kappa = 4/r^2, alpha = 2, g = 0.2,
  // h = 100 g / (alpha r^2)
  double kappa() const noexcept { return kappa_; }
  double h_rate() const noexcept { return h_; }

 private:
  Vec y_;
  double m_, r_, kappa_, h_;
  static constexpr double kAlpha = 2.0;
  static constexpr double kG = 0.2;
};

// Log-Gaussian Cox process posterior on a G x G unit-square grid.
// State layout: (x_1..x_{G^2}, log sigma^2, log beta); the latent field has
// prior N(mu 1, sigma^2 rho(beta)) with rho_{uv} = exp(-delta_{uv} / (G beta)),
// mu = log(126) - sigma^2/2, cell counts Y_{ij} ~ Poisson(m exp(x_{ij})),
// m = 1/G^2, and independent Exp(1) priors on sigma^2 and beta.
class LogGaussianCoxTarget final : public TargetDensity {
 public:
  LogGaussianCoxTarget(int grid, std::vector<int> counts);

  using TargetDensity::gradient;
  double log_density(ConstSpan x) const override;
  void gradient(ConstSpan x, MutSpan out) const override;
  void gradient_block(ConstSpan x, std::span<const int> idx, MutSpan out) const override;

  bool can_sample_init() const override { return true; }
  Vec sample_init(RandomSource& rng) const override;  // prior draw

  int grid() const noexcept { return g_; }
  int latent_dim() const noexcept { return g_ * g_; }
  const std::vector<int>& counts() const noexcept { return y_; }
  double cell_area() const noexcept { return m_; }

  // Synthetic data: latent field from the GP prior and Poisson counts.
  struct Synthetic {
    Vec field;
    std::vector<int> counts;
  };
  static Synthetic generate_synthetic(int grid, double sigma2, double beta,
                                      std::uint64_t seed);

  // Dense prior covariance for given hyperparameters (tests, generation).
  static Vec covariance(int grid, double sigma2, double beta);

 private:
  struct HyperTerms;
  const HyperTerms& terms_for(double beta) const;

  int g_;
  std::vector<int> y_;
  double m_;
  Vec dist_;           // pairwise grid distances, row-major G^2 x G^2
  double log_y_fact_;  // sum of log(Y!) so the likelihood is a true log pmf
};

// Plain-text dataset round-trip (one value per line for mixture data;
// G then G^2 counts for Cox).
void save_mixture_data(const std::string& path, const Vec& y);
Vec load_mixture_data(const std::string& path);
void save_cox_counts(const std::string& path, int grid, const std::vector<int>& counts);
std::pair<int, std::vector<int>> load_cox_counts(const std::string& path);

}  // namespace eqn
