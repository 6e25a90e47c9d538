#include "eqn/targets.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "eqn/errors.hpp"

namespace eqn {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

int poisson_draw(double mean, RandomSource& rng) {
  // Inversion by sequential search; cell means here are O(1).
  if (mean <= 0.0) return 0;
  double p = std::exp(-mean), cdf = p;
  const double u = rng.uniform();
  int k = 0;
  while (u > cdf && k < 10000) {
    ++k;
    p *= mean / k;
    cdf += p;
  }
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------
// TargetDensity

TargetDensity::TargetDensity(int dim, std::string name)
    : dim_(dim), name_(std::move(name)) {
  if (dim <= 0) throw std::invalid_argument("target dimension must be positive");
}

void TargetDensity::check_dim(ConstSpan x) const {
  if (static_cast<int>(x.size()) != dim_)
    throw std::invalid_argument(name_ + ": point has length " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(dim_));
}

Vec TargetDensity::gradient(ConstSpan x) const {
  Vec out(dim_);
  gradient(x, out);
  return out;
}

void TargetDensity::gradient_block(ConstSpan x, std::span<const int> idx,
                                   MutSpan out) const {
  Vec full(dim_);
  gradient(x, full);
  for (std::size_t j = 0; j < idx.size(); ++j) out[j] = full[idx[j]];
}

Vec TargetDensity::sample_init(RandomSource&) const {
  throw std::logic_error(name_ + ": no initialization sampler");
}

// ---------------------------------------------------------------------------
// GaussianTarget

GaussianTarget::GaussianTarget(Vec variances)
    : TargetDensity(static_cast<int>(variances.size()), "gaussian"),
      diagonal_(true),
      var_(std::move(variances)) {
  double lo = var_[0], hi = var_[0];
  for (double v : var_) {
    if (v <= 0.0) throw std::invalid_argument("gaussian: variances must be positive");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  cond_ = hi / lo;
}

GaussianTarget::GaussianTarget(int dim, Vec covariance)
    : TargetDensity(dim, "gaussian"), diagonal_(false) {
  if (static_cast<int>(covariance.size()) != dim * dim)
    throw std::invalid_argument("gaussian: covariance size mismatch");
  MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = covariance[std::size_t(i) * dim + j];
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("gaussian: covariance not positive definite");
  cond_ = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
  MatrixXd prec = eig.operatorInverseSqrt() * eig.operatorInverseSqrt();
  prec_.assign(prec.data(), prec.data() + dim * dim);  // symmetric, order moot
  Eigen::LLT<MatrixXd> llt(m);
  MatrixXd l = llt.matrixL();
  chol_.assign(std::size_t(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j <= i; ++j) chol_[std::size_t(i) * dim + j] = l(i, j);
}

void GaussianTarget::precision_apply(ConstSpan x, MutSpan out) const {
  if (diagonal_) {
    for (int i = 0; i < dim(); ++i) out[i] = x[i] / var_[i];
    return;
  }
  for (int i = 0; i < dim(); ++i)
    out[i] = kernels::dot({prec_.data() + std::size_t(i) * dim(), std::size_t(dim())}, x);
}

double GaussianTarget::log_density(ConstSpan x) const {
  check_dim(x);
  for (double v : x)
    if (!std::isfinite(v)) return kNegInf;
  Vec px(dim());
  precision_apply(x, px);
  return -0.5 * kernels::dot(x, px);
}

void GaussianTarget::gradient(ConstSpan x, MutSpan out) const {
  check_dim(x);
  for (double v : x)
    if (!std::isfinite(v)) throw DomainError("gaussian: non-finite point");
  precision_apply(x, out);
  for (int i = 0; i < dim(); ++i) out[i] = -out[i];
}

Vec GaussianTarget::sample_init(RandomSource& rng) const {
  Vec z(dim());
  rng.fill_normal(z);
  if (diagonal_) {
    for (int i = 0; i < dim(); ++i) z[i] *= std::sqrt(var_[i]);
    return z;
  }
  Vec out(dim(), 0.0);
  for (int i = 0; i < dim(); ++i)
    for (int j = 0; j <= i; ++j) out[i] += chol_[std::size_t(i) * dim() + j] * z[j];
  return out;
}

// ---------------------------------------------------------------------------
// RingTarget

RingTarget::RingTarget(double radius, double width, int dim)
    : TargetDensity(dim, "ring"), r0_(radius), s_(width) {
  if (radius <= 0.0 || width <= 0.0)
    throw std::invalid_argument("ring: radius and width must be positive");
}

double RingTarget::log_density(ConstSpan x) const {
  check_dim(x);
  const double r = std::sqrt(kernels::sumsq(x));
  if (!std::isfinite(r)) return kNegInf;
  const double d = r - r0_;
  return -0.5 * d * d / (s_ * s_);
}

void RingTarget::gradient(ConstSpan x, MutSpan out) const {
  check_dim(x);
  const double r = std::sqrt(kernels::sumsq(x));
  if (!std::isfinite(r)) throw DomainError("ring: non-finite point");
  if (r == 0.0) throw DomainError("ring: gradient undefined at the origin");
  const double coef = -(r - r0_) / (s_ * s_ * r);
  kernels::copy_scaled(coef, x, out);
}

// ---------------------------------------------------------------------------
// MixtureModelTarget

MixtureModelTarget::MixtureModelTarget(Vec data)
    : TargetDensity(9, "mixture"), y_(std::move(data)) {
  if (y_.empty()) throw std::invalid_argument("mixture: empty data vector");
  const auto [lo, hi] = std::minmax_element(y_.begin(), y_.end());
  m_ = kernels::sum(y_) / double(y_.size());
  r_ = *hi - *lo;
  if (r_ <= 0.0) throw std::invalid_argument("mixture: data has zero range");
  kappa_ = 4.0 / (r_ * r_);
  h_ = 100.0 * kG / (kAlpha * r_ * r_);
}

Vec MixtureModelTarget::embed(const Params& p) {
  for (int k = 0; k < 3; ++k)
    if (p.lambda[k] <= 0.0 || p.z[k] <= 0.0)
      throw std::invalid_argument("mixture: precisions and weights must be positive");
  if (p.beta <= 0.0) throw std::invalid_argument("mixture: beta must be positive");
  if (std::abs(p.z[0] + p.z[1] + p.z[2] - 1.0) > 1e-10)
    throw std::invalid_argument("mixture: weights must sum to 1");
  Vec th(9);
  th[0] = p.mu[0];
  th[1] = p.mu[1];
  th[2] = p.mu[2];
  th[3] = std::log(p.lambda[0]);
  th[4] = std::log(p.lambda[1]);
  th[5] = std::log(p.lambda[2]);
  const double v1 = p.z[0];
  const double v2 = p.z[1] / (1.0 - p.z[0]);
  th[6] = std::log(v1 / (1.0 - v1));
  th[7] = std::log(v2 / (1.0 - v2));
  th[8] = std::log(p.beta);
  return th;
}

MixtureModelTarget::Params MixtureModelTarget::unpack(ConstSpan th) {
  Params p;
  for (int k = 0; k < 3; ++k) {
    p.mu[k] = th[k];
    p.lambda[k] = std::exp(th[3 + k]);
  }
  const double v1 = logistic(th[6]);
  const double v2 = logistic(th[7]);
  p.z[0] = v1;
  p.z[1] = (1.0 - v1) * v2;
  p.z[2] = (1.0 - v1) * (1.0 - v2);
  p.beta = std::exp(th[8]);
  return p;
}

double MixtureModelTarget::log_density(ConstSpan th) const {
  check_dim(th);
  for (double v : th)
    if (!std::isfinite(v)) return kNegInf;
  const Params p = unpack(th);

  // log likelihood via log-sum-exp over components
  double ll = 0.0;
  double logw[3];
  for (int k = 0; k < 3; ++k)
    logw[k] = std::log(p.z[k]) + 0.5 * (std::log(p.lambda[k]) - kLog2Pi);
  for (double yi : y_) {
    double t[3];
    for (int k = 0; k < 3; ++k) {
      const double d = yi - p.mu[k];
      t[k] = logw[k] - 0.5 * p.lambda[k] * d * d;
    }
    const double mx = std::max({t[0], t[1], t[2]});
    ll += mx + std::log(std::exp(t[0] - mx) + std::exp(t[1] - mx) + std::exp(t[2] - mx));
  }

  // log prior
  double lp = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double dm = p.mu[k] - m_;
    lp += 0.5 * (std::log(kappa_) - kLog2Pi) - 0.5 * kappa_ * dm * dm;
    lp += kAlpha * std::log(p.beta) - std::lgamma(kAlpha) +
          (kAlpha - 1.0) * std::log(p.lambda[k]) - p.beta * p.lambda[k];
  }
  lp += std::lgamma(3.0);  // Dirichlet(1,1,1) normalization
  lp += kG * std::log(h_) - std::lgamma(kG) + (kG - 1.0) * std::log(p.beta) - h_ * p.beta;

  // log Jacobian of the embedding: sum log lambda_k + sum log z_k + log beta
  double lj = th[3] + th[4] + th[5] + th[8];
  lj += std::log(p.z[0]) + std::log(p.z[1]) + std::log(p.z[2]);

  return ll + lp + lj;
}

void MixtureModelTarget::gradient(ConstSpan th, MutSpan out) const {
  check_dim(th);
  for (double v : th)
    if (!std::isfinite(v)) throw DomainError("mixture: non-finite point");
  const Params p = unpack(th);

  double dmu[3] = {0, 0, 0};       // d loglik / d mu_k
  double dlam[3] = {0, 0, 0};      // d loglik / d lambda_k
  double dz[3] = {0, 0, 0};        // d loglik / d z_k
  double logw[3];
  for (int k = 0; k < 3; ++k)
    logw[k] = std::log(p.z[k]) + 0.5 * (std::log(p.lambda[k]) - kLog2Pi);
  for (double yi : y_) {
    double t[3];
    for (int k = 0; k < 3; ++k) {
      const double d = yi - p.mu[k];
      t[k] = logw[k] - 0.5 * p.lambda[k] * d * d;
    }
    const double mx = std::max({t[0], t[1], t[2]});
    double w[3], s = 0.0;
    for (int k = 0; k < 3; ++k) {
      w[k] = std::exp(t[k] - mx);
      s += w[k];
    }
    for (int k = 0; k < 3; ++k) {
      const double resp = w[k] / s;  // responsibility of component k for y_i
      const double d = yi - p.mu[k];
      dmu[k] += resp * p.lambda[k] * d;
      dlam[k] += resp * (0.5 / p.lambda[k] - 0.5 * d * d);
      dz[k] += resp / p.z[k];
    }
  }

  // prior contributions
  double dbeta = (kG - 1.0) / p.beta - h_;
  for (int k = 0; k < 3; ++k) {
    dmu[k] += -kappa_ * (p.mu[k] - m_);
    dlam[k] += (kAlpha - 1.0) / p.lambda[k] - p.beta;
    dbeta += kAlpha / p.beta - p.lambda[k];
  }

  // chain rules into the unconstrained coordinates
  for (int k = 0; k < 3; ++k) {
    out[k] = dmu[k];
    out[3 + k] = p.lambda[k] * dlam[k] + 1.0;  // + d/dl of log-Jacobian
  }
  // stick-breaking: z = z(t1, t2); the Jacobian term adds 1/z_k to dz
  const double v1 = logistic(th[6]);
  const double v2 = logistic(th[7]);
  const double g1 = v1 * (1.0 - v1);
  const double g2 = v2 * (1.0 - v2);
  const double f[3] = {dz[0] + 1.0 / p.z[0], dz[1] + 1.0 / p.z[1], dz[2] + 1.0 / p.z[2]};
  out[6] = f[0] * g1 + f[1] * (-g1 * v2) + f[2] * (-g1 * (1.0 - v2));
  out[7] = f[1] * (1.0 - v1) * g2 + f[2] * (-(1.0 - v1) * g2);
  out[8] = p.beta * dbeta + 1.0;
}

Vec MixtureModelTarget::sample_init(RandomSource& rng) const {
  // Prior draw in unconstrained coordinates.
  Params p;
  const double beta0 = 1.0 / h_;  // prior scale for beta (mean g/h)
  p.beta = -beta0 * std::log(rng.uniform());
  for (int k = 0; k < 3; ++k) {
    p.mu[k] = m_ + rng.normal() / std::sqrt(kappa_);
    // Gamma(2, beta) via sum of two exponentials
    p.lambda[k] = (-std::log(rng.uniform()) - std::log(rng.uniform())) / p.beta;
  }
  // Dirichlet(1,1,1) via exponentials
  double e[3], s = 0;
  for (int k = 0; k < 3; ++k) {
    e[k] = -std::log(rng.uniform());
    s += e[k];
  }
  for (int k = 0; k < 3; ++k) p.z[k] = e[k] / s;
  return embed(p);
}

Vec MixtureModelTarget::generate_synthetic(int n, const Params& truth,
                                           std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("mixture: need n >= 1 samples");
  for (int k = 0; k < 3; ++k)
    if (truth.lambda[k] <= 0.0 || truth.z[k] < 0.0)
      throw std::invalid_argument("mixture: invalid generating parameters");
  if (std::abs(truth.z[0] + truth.z[1] + truth.z[2] - 1.0) > 1e-10)
    throw std::invalid_argument("mixture: weights must sum to 1");
  PhiloxRng rng(seed, 0xD5A7Au);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    int k = 0;
    if (u > truth.z[0]) k = (u > truth.z[0] + truth.z[1]) ? 2 : 1;
    y[i] = truth.mu[k] + rng.normal() / std::sqrt(truth.lambda[k]);
  }
  return y;
}

// ---------------------------------------------------------------------------
// LogGaussianCoxTarget

namespace {

// Dense per-beta terms; cached per thread since walkers carry their own
// hyperparameters but evaluate many latent steps at a fixed beta.
struct CoxTerms {
  const void* owner = nullptr;
  std::uint64_t beta_bits = 0;
  MatrixXd chol_l;     // lower factor of rho(beta)
  double logdet_rho = 0.0;
  MatrixXd rho_inv;    // filled lazily for hyper gradients
  MatrixXd drho;       // d rho / d beta, filled lazily
  bool have_inv = false;
};

std::uint64_t double_bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof(b));
  return b;
}

}  // namespace

struct LogGaussianCoxTarget::HyperTerms : CoxTerms {};

LogGaussianCoxTarget::LogGaussianCoxTarget(int grid, std::vector<int> counts)
    : TargetDensity(grid * grid + 2, "cox"), g_(grid), y_(std::move(counts)) {
  if (grid < 2) throw std::invalid_argument("cox: grid must be at least 2");
  const int n = grid * grid;
  if (static_cast<int>(y_.size()) != n)
    throw std::invalid_argument("cox: counts size must equal grid^2");
  m_ = 1.0 / double(n);
  dist_.assign(std::size_t(n) * n, 0.0);
  for (int a = 0; a < n; ++a) {
    const int ai = a / grid, aj = a % grid;
    for (int b = 0; b < n; ++b) {
      const int bi = b / grid, bj = b % grid;
      const double di = ai - bi, dj = aj - bj;
      dist_[std::size_t(a) * n + b] = std::sqrt(di * di + dj * dj);
    }
  }
  log_y_fact_ = 0.0;
  for (int c : y_) {
    if (c < 0) throw std::invalid_argument("cox: counts must be nonnegative");
    log_y_fact_ += std::lgamma(double(c) + 1.0);
  }
}

const LogGaussianCoxTarget::HyperTerms& LogGaussianCoxTarget::terms_for(double beta) const {
  thread_local std::vector<HyperTerms> cache;
  const std::uint64_t bits = double_bits(beta);
  for (auto& e : cache)
    if (e.owner == this && e.beta_bits == bits) return e;

  const int n = g_ * g_;
  HyperTerms t;
  t.owner = this;
  t.beta_bits = bits;
  MatrixXd rho(n, n);
  const double scale = -1.0 / (double(g_) * beta);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      rho(a, b) = std::exp(scale * dist_[std::size_t(a) * n + b]);
  Eigen::LLT<MatrixXd> llt(rho);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("cox: correlation matrix not positive definite at beta=" +
                             std::to_string(beta));
  t.chol_l = llt.matrixL();
  t.logdet_rho = 0.0;
  for (int i = 0; i < n; ++i) t.logdet_rho += 2.0 * std::log(t.chol_l(i, i));

  if (cache.size() >= 3) cache.erase(cache.begin());
  cache.push_back(std::move(t));
  return cache.back();
}

double LogGaussianCoxTarget::log_density(ConstSpan x) const {
  check_dim(x);
  const int n = latent_dim();
  const double s2 = std::exp(x[n]);
  const double beta = std::exp(x[n + 1]);
  if (!std::isfinite(s2) || !std::isfinite(beta) || s2 <= 0.0 || beta <= 0.0)
    return kNegInf;
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return kNegInf;

  const double mu = std::log(126.0) - 0.5 * s2;
  const auto& t = terms_for(beta);

  // likelihood: sum Y x - m e^x - log Y!
  double ll = -log_y_fact_;
  for (int i = 0; i < n; ++i) ll += y_[i] * x[i] - m_ * std::exp(x[i]);

  // latent prior
  VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = x[i] - mu;
  VectorXd w = t.chol_l.triangularView<Eigen::Lower>().solve(u);
  const double quad = w.squaredNorm() / s2;
  const double lp_x = -0.5 * quad - 0.5 * (n * (kLog2Pi + std::log(s2)) + t.logdet_rho);

  // Exp(1) hyperpriors plus the log-Jacobian of the log transforms
  const double lp_h = -s2 - beta + x[n] + x[n + 1];

  return ll + lp_x + lp_h;
}

void LogGaussianCoxTarget::gradient(ConstSpan x, MutSpan out) const {
  check_dim(x);
  const int n = latent_dim();
  std::vector<int> idx(n + 2);
  std::iota(idx.begin(), idx.end(), 0);
  gradient_block(x, idx, out);
}

void LogGaussianCoxTarget::gradient_block(ConstSpan x, std::span<const int> idx,
                                          MutSpan out) const {
  check_dim(x);
  const int n = latent_dim();
  const double s2 = std::exp(x[n]);
  const double beta = std::exp(x[n + 1]);
  if (!std::isfinite(s2) || !std::isfinite(beta))
    throw DomainError("cox: non-finite hyperparameters");

  bool want_latent = false, want_s = false, want_b = false;
  for (int i : idx) {
    if (i < n) want_latent = true;
    else if (i == n) want_s = true;
    else want_b = true;
  }

  const double mu = std::log(126.0) - 0.5 * s2;
  auto& t = const_cast<HyperTerms&>(terms_for(beta));

  VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = x[i] - mu;
  // rho^{-1} u via two triangular solves
  VectorXd w = t.chol_l.triangularView<Eigen::Lower>().solve(u);
  VectorXd riu = t.chol_l.transpose().triangularView<Eigen::Upper>().solve(w);

  Vec latent_grad;
  if (want_latent) {
    latent_grad.resize(n);
    for (int i = 0; i < n; ++i)
      latent_grad[i] = y_[i] - m_ * std::exp(x[i]) - riu[i] / s2;
  }

  double gs = 0.0, gb = 0.0;
  if (want_s) {
    const double quad = w.squaredNorm();  // u^T rho^{-1} u
    const double ones_riu = riu.sum();    // 1^T rho^{-1} u
    // d/d s2 of latent prior with mu(s2) = log 126 - s2/2, then chain to log s2
    const double dlp_ds2 =
        0.5 * quad / (s2 * s2) - 0.5 * n / s2 - 0.5 * ones_riu / s2;
    gs = s2 * (dlp_ds2 - 1.0) + 1.0;  // -1 from the Exp prior, +1 Jacobian
  }
  if (want_b) {
    const int nn = n;
    if (!t.have_inv) {
      t.rho_inv = t.chol_l.transpose().triangularView<Eigen::Upper>().solve(
          t.chol_l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(nn, nn)));
      const double scale = -1.0 / (double(g_) * beta);
      t.drho.resize(nn, nn);
      for (int a = 0; a < nn; ++a)
        for (int b = 0; b < nn; ++b) {
          const double d = dist_[std::size_t(a) * nn + b];
          t.drho(a, b) = std::exp(scale * d) * d / (double(g_) * beta * beta);
        }
      t.have_inv = true;
    }
    const double quad_term = 0.5 * riu.dot(t.drho * riu) / s2;
    const double trace_term = -0.5 * (t.rho_inv.cwiseProduct(t.drho)).sum();
    gb = beta * (quad_term + trace_term - 1.0) + 1.0;
  }

  for (std::size_t j = 0; j < idx.size(); ++j) {
    const int i = idx[j];
    if (i < n) out[j] = latent_grad[i];
    else if (i == n) out[j] = gs;
    else out[j] = gb;
  }
}

Vec LogGaussianCoxTarget::sample_init(RandomSource& rng) const {
  // Hyperparameters from their Exp(1) priors, latent field from the GP prior.
  const double s2 = -std::log(rng.uniform());
  const double beta = -std::log(rng.uniform());
  const int n = latent_dim();
  const auto& t = terms_for(beta);
  const double mu = std::log(126.0) - 0.5 * s2;
  VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  VectorXd f = std::sqrt(s2) * (t.chol_l * z);
  Vec out(n + 2);
  for (int i = 0; i < n; ++i) out[i] = mu + f[i];
  out[n] = std::log(s2);
  out[n + 1] = std::log(beta);
  return out;
}

Vec LogGaussianCoxTarget::covariance(int grid, double sigma2, double beta) {
  const int n = grid * grid;
  Vec cov(std::size_t(n) * n);
  for (int a = 0; a < n; ++a) {
    const int ai = a / grid, aj = a % grid;
    for (int b = 0; b < n; ++b) {
      const int bi = b / grid, bj = b % grid;
      const double d = std::sqrt(double((ai - bi) * (ai - bi) + (aj - bj) * (aj - bj)));
      cov[std::size_t(a) * n + b] = sigma2 * std::exp(-d / (double(grid) * beta));
    }
  }
  return cov;
}

LogGaussianCoxTarget::Synthetic LogGaussianCoxTarget::generate_synthetic(
    int grid, double sigma2, double beta, std::uint64_t seed) {
  if (grid < 2) throw std::invalid_argument("cox: grid must be at least 2");
  const int n = grid * grid;
  Vec cov = covariance(grid, sigma2, beta);
  MatrixXd c(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) c(a, b) = cov[std::size_t(a) * n + b];
  Eigen::LLT<MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("cox: covariance not positive definite at sigma2=" +
                             std::to_string(sigma2) + ", beta=" + std::to_string(beta));
  PhiloxRng rng(seed, 0xC0C5u);
  VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  const double mu = std::log(126.0) - 0.5 * sigma2;
  VectorXd field = MatrixXd(llt.matrixL()) * z;

  Synthetic out;
  out.field.resize(n);
  out.counts.resize(n);
  const double m = 1.0 / double(n);
  for (int i = 0; i < n; ++i) {
    out.field[i] = mu + field[i];
    out.counts[i] = poisson_draw(m * std::exp(out.field[i]), rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// dataset round-trips

void save_mixture_data(const std::string& path, const Vec& y) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  for (double v : y) f << v << "\n";
}

Vec load_mixture_data(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  Vec y;
  double v;
  while (f >> v) y.push_back(v);
  if (y.empty()) throw std::runtime_error("empty dataset: " + path);
  return y;
}

void save_cox_counts(const std::string& path, int grid, const std::vector<int>& counts) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << grid << "\n";
  for (int c : counts) f << c << "\n";
}

std::pair<int, std::vector<int>> load_cox_counts(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  int g;
  if (!(f >> g) || g < 2) throw std::runtime_error("bad grid size in " + path);
  std::vector<int> counts(std::size_t(g) * g);
  for (auto& c : counts)
    if (!(f >> c)) throw std::runtime_error("truncated counts in " + path);
  return {g, std::move(counts)};
}

}  // namespace eqn
