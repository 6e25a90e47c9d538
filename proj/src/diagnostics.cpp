#include "eqn/diagnostics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace eqn {

IatResult iat_empirical(ConstSpan series, double window_factor) {
  const std::size_t n = series.size();
  if (n < 100)
    throw std::invalid_argument("iat_empirical: need at least 100 samples, got " +
                                std::to_string(n));
  Vec x(series.begin(), series.end());
  const double mean = kernels::sum(x) / double(n);
  for (auto& v : x) v -= mean;
  const double c0 = kernels::sumsq(x) / double(n);

  IatResult res;
  if (!(c0 > 0.0) || !std::isfinite(c0)) {
    res.status = IatStatus::degenerate;
    return res;
  }

  const std::size_t max_lag = n / 3;
  double tau = 1.0;
  for (std::size_t w = 1; w <= max_lag; ++w) {
    const double cw =
        kernels::dot({x.data(), n - w}, {x.data() + w, n - w}) / double(n - w);
    tau += 2.0 * cw / c0;
    if (double(w) >= window_factor * tau) {
      res.tau = std::max(tau, 1e-12);
      res.window = static_cast<int>(w);
      res.uncertainty = res.tau * std::sqrt(2.0 * (2.0 * w + 1.0) / double(n));
      res.status = IatStatus::ok;
      return res;
    }
  }
  res.status = IatStatus::unconverged;
  res.tau = tau;
  res.window = static_cast<int>(max_lag);
  return res;
}

double iat_analytic_gaussian(const Vec& m_dense, int dim, ConstSpan v, double h) {
  Eigen::MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = m_dense[std::size_t(i) * dim + j];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const double lmin = eig.eigenvalues().minCoeff();
  if (lmin <= 0.0)
    throw std::invalid_argument("iat_analytic_gaussian: M must be positive definite");
  const double bound = 2.0 * lmin;  // = 2 / lambda_max(M^{-1})
  if (!(h < bound))
    throw std::invalid_argument(
        "iat_analytic_gaussian: stepsize violates the stability bound h < 2/lambda_max(M^-1) = " +
        std::to_string(bound));
  Eigen::Map<const Eigen::VectorXd> vv(v.data(), dim);
  const double num = vv.dot(m * (m * vv));
  const double den = vv.dot(m * vv);
  return 2.0 * num / (h * den) - 1.0;
}

double iat_analytic_gaussian_diag(ConstSpan m_diag, ConstSpan v, double h) {
  const int n = static_cast<int>(m_diag.size());
  Vec dense(std::size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i) dense[std::size_t(i) * n + i] = m_diag[i];
  return iat_analytic_gaussian(dense, n, v, h);
}

SeriesStats series_stats(ConstSpan series) {
  SeriesStats s;
  const std::size_t n = series.size();
  s.mean = kernels::sum(series) / double(n);
  double var = 0.0;
  for (double v : series) var += (v - s.mean) * (v - s.mean);
  var /= double(n);
  s.iat = iat_empirical(series);
  const double tau = s.iat.status == IatStatus::ok ? s.iat.tau : std::max(1.0, s.iat.tau);
  s.stderr_corrected = std::sqrt(var * tau / double(n));
  return s;
}

KsResult ks_two_sample(Vec a, Vec b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 || m == 0) throw std::invalid_argument("ks_two_sample: empty sample");
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(double(i) / n - double(j) / m));
  }
  const double ne = std::sqrt(double(n) * m / double(n + m));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  // Kolmogorov tail sum
  double p = 0.0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return {d, std::clamp(p, 0.0, 1.0)};
}

double RunSummary::max_tau() const {
  double t = 0.0;
  for (const auto& o : observables) t = std::max(t, o.tau);
  return t;
}

ComparisonReport compare_runs(std::vector<RunSummary> entries,
                              const std::string& reference, CostBasis basis) {
  ComparisonReport rep;
  rep.entries = std::move(entries);
  rep.reference = reference;
  rep.cost_basis = basis;

  auto cost_of = [&](const RunSummary& r) {
    return basis == CostBasis::gradients ? r.grads_per_iteration
                                         : r.seconds_per_iteration;
  };
  const RunSummary* ref = nullptr;
  for (const auto& e : rep.entries)
    if (e.sampler == reference) ref = &e;
  if (!ref) throw std::invalid_argument("compare_runs: unknown reference '" + reference + "'");
  const double ref_work = ref->max_tau() * cost_of(*ref);
  for (const auto& e : rep.entries) {
    const double w = e.max_tau() * cost_of(e);
    rep.efficiency.push_back(w > 0.0 ? ref_work / w : 0.0);
  }
  return rep;
}

std::string ComparisonReport::table() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  std::vector<std::string> obs_names;
  if (!entries.empty())
    for (const auto& o : entries.front().observables) obs_names.push_back(o.observable);

  os << "scheme";
  for (const auto& n : obs_names) os << "\ttau(" << n << ")";
  os << "\taccept\tcost/" << (cost_basis == CostBasis::gradients ? "grad" : "sec")
     << "\tefficiency\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    os << e.sampler << (e.biased_flag ? " [biased]" : "");
    os.precision(1);
    for (const auto& o : e.observables)
      os << "\t" << o.tau << (o.tau_converged ? "" : "*");
    os.precision(3);
    os << "\t" << e.acceptance_rate;
    os << "\t"
       << (cost_basis == CostBasis::gradients ? e.grads_per_iteration
                                              : e.seconds_per_iteration);
    os << "\t" << efficiency[i] << "\n";
  }
  if (!entries.empty()) os << "# efficiency normalized to " << reference << " = 1.0\n";
  return os.str();
}

std::string ComparisonReport::key_values() const {
  std::ostringstream os;
  os.precision(17);
  os << "reference=" << reference << "\n";
  os << "cost_basis=" << (cost_basis == CostBasis::gradients ? "gradients" : "seconds")
     << "\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string p = "entry." + e.sampler + ".";
    os << p << "acceptance=" << e.acceptance_rate << "\n";
    os << p << "grads_per_iteration=" << e.grads_per_iteration << "\n";
    os << p << "seconds_per_iteration=" << e.seconds_per_iteration << "\n";
    os << p << "biased=" << (e.biased_flag ? 1 : 0) << "\n";
    os << p << "efficiency=" << efficiency[i] << "\n";
    for (const auto& o : e.observables) {
      os << p << o.observable << ".tau=" << o.tau << "\n";
      os << p << o.observable << ".tau_err=" << o.tau_uncertainty << "\n";
      os << p << o.observable << ".tau_converged=" << (o.tau_converged ? 1 : 0) << "\n";
      os << p << o.observable << ".mean=" << o.mean << "\n";
      os << p << o.observable << ".stderr=" << o.stderr_corrected << "\n";
    }
  }
  return os.str();
}

}  // namespace eqn
