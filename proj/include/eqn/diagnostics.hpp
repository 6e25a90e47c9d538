#pragma once

#include <string>
#include <vector>

#include "eqn/vec.hpp"

namespace eqn {

// --------------------------------------------------------------------------
// Integrated autocorrelation time

enum class IatStatus { ok, unconverged, degenerate };

struct IatResult {
  double tau = 1.0;
  double uncertainty = 0.0;
  int window = 0;
  IatStatus status = IatStatus::ok;
};

// Self-consistent-window estimator: the smallest W with W >= c * tau_hat(W),
// tau_hat(W) = 1 + 2 sum_{s<=W} rho(s).  Uncertainty per Sokal,
// tau * sqrt(2(2W+1)/T).  Series shorter than 100 raise; series whose window
// never closes report `unconverged`, constant series report `degenerate`.
IatResult iat_empirical(ConstSpan series, double window_factor = 5.0);

// Closed-form worst-case IAT of the overdamped Euler chain on a Gaussian
// with covariance M for the observable v^T x:
//   tau = 2 v^T M^2 v / (h v^T M v) - 1,
// valid under the stability condition h < 2 / lambda_max(M^{-1}).
double iat_analytic_gaussian(const Vec& m_dense, int dim, ConstSpan v, double h);
double iat_analytic_gaussian_diag(ConstSpan m_diag, ConstSpan v, double h);

// mean and IAT-corrected standard error of a series
struct SeriesStats {
  double mean = 0.0;
  double stderr_corrected = 0.0;
  IatResult iat;
};
SeriesStats series_stats(ConstSpan series);

// --------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
KsResult ks_two_sample(Vec a, Vec b);

// --------------------------------------------------------------------------
// Run summaries

struct ObservableStats {
  std::string observable;
  double mean = 0.0;
  double stderr_corrected = 0.0;
  double tau = 1.0;
  double tau_uncertainty = 0.0;
  bool tau_converged = true;
};

// One sampler entry of a comparison.
struct RunSummary {
  std::string sampler;
  double acceptance_rate = 1.0;
  double grads_per_iteration = 1.0;
  double seconds_per_iteration = 0.0;
  bool biased_flag = false;
  std::vector<ObservableStats> observables;
  double max_tau() const;
};

enum class CostBasis { gradients, seconds };

struct ComparisonReport {
  std::vector<RunSummary> entries;
  std::string reference;           // sampler whose efficiency is 1.0
  CostBasis cost_basis = CostBasis::gradients;
  std::vector<double> efficiency;  // per entry, aligned with `entries`

  std::string table() const;       // human-readable table
  std::string key_values() const;  // machine-readable key=value lines
};

// Efficiency column: (tau_ref * cost_ref) / (tau * cost) with tau the worst
// (largest) observable IAT of each entry.
ComparisonReport compare_runs(std::vector<RunSummary> entries,
                              const std::string& reference, CostBasis basis);

}  // namespace eqn
