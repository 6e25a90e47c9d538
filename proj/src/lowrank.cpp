#include "eqn/lowrank.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

#include "eqn/errors.hpp"

namespace eqn {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::Map<const VectorXd> as_eigen(ConstSpan v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

// Orthonormal basis spanning the operator's eigenvectors plus any extra
// directions, with the square-root eigenvalue attached to each column.
struct SpanBasis {
  Vec cols;   // n x m, column-major
  Vec bvals;  // m
  int n = 0;
  int m = 0;

  ConstSpan col(int a) const {
    return {cols.data() + std::size_t(a) * n, std::size_t(n)};
  }

  // coords of v in this basis (columns are orthonormal)
  Vec project(ConstSpan v) const {
    Vec g(m);
    for (int a = 0; a < m; ++a) g[a] = kernels::dot(col(a), v);
    return g;
  }

  void accumulate(ConstSpan coords, MutSpan out) const {
    for (int a = 0; a < m; ++a) kernels::axpy(coords[a], col(a), out);
  }
};

SpanBasis extend_basis(const SqrtOperator& b, const std::vector<Vec>& dirs) {
  const int n = b.dim();
  const int r = b.rank();
  SpanBasis w;
  w.n = n;
  w.cols.reserve(std::size_t(n) * (r + dirs.size()));
  w.bvals.reserve(r + dirs.size());
  for (int l = 0; l < r; ++l) {
    ConstSpan z = b.basis_column(l);
    w.cols.insert(w.cols.end(), z.begin(), z.end());
    w.bvals.push_back(std::sqrt(b.base() + b.eigenvalues()[l]));
  }
  w.m = r;
  const double sqrt_base = std::sqrt(b.base());
  Vec res(n);
  for (const Vec& d : dirs) {
    copy_into(d, res);
    const double dn = std::sqrt(kernels::sumsq(res));
    if (dn == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {  // MGS twice
      for (int a = 0; a < w.m; ++a) {
        ConstSpan c = {w.cols.data() + std::size_t(a) * n, std::size_t(n)};
        kernels::axpy(-kernels::dot(c, res), c, res);
      }
    }
    const double rn = std::sqrt(kernels::sumsq(res));
    if (rn > 1e-10 * dn) {
      if (b.base() <= 0.0)
        throw RankError("perturbation direction leaves the range of a singular operator");
      const double inv = 1.0 / rn;
      for (double v : res) w.cols.push_back(v * inv);
      w.bvals.push_back(sqrt_base);
      ++w.m;
    }
  }
  return w;
}

double logabsdet_with_sign(const MatrixXd& m, double& sign) {
  Eigen::PartialPivLU<MatrixXd> lu(m);
  sign = lu.permutationP().determinant() < 0 ? -1.0 : 1.0;
  double lad = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double d = lu.matrixLU()(i, i);
    if (d == 0.0) {
      sign = 0.0;
      return -std::numeric_limits<double>::infinity();
    }
    if (d < 0) sign = -sign;
    lad += std::log(std::abs(d));
  }
  return lad;
}

}  // namespace

Vec LowRankSPD::dense() const {
  Vec out(std::size_t(dim) * dim, 0.0);
  for (int i = 0; i < dim; ++i) out[std::size_t(i) * dim + i] = base;
  for (std::size_t k = 0; k < factors.size(); ++k) {
    const Vec& u = factors[k];
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        out[std::size_t(i) * dim + j] += coefs[k] * u[i] * u[j];
  }
  return out;
}

SqrtOperator SqrtOperator::build(const LowRankSPD& a) {
  if (a.factors.size() != a.coefs.size())
    throw std::invalid_argument("LowRankSPD: factor/coef count mismatch");
  SqrtOperator op;
  op.n_ = a.dim;
  op.base_ = a.base;

  // Scaled factors with strictly positive coefficients.
  std::vector<const Vec*> us;
  Vec scales;
  for (std::size_t k = 0; k < a.factors.size(); ++k) {
    if (a.coefs[k] < 0.0)
      throw std::invalid_argument("LowRankSPD: negative coefficient");
    if (a.coefs[k] > 0.0) {
      if (static_cast<int>(a.factors[k].size()) != a.dim)
        throw std::invalid_argument("LowRankSPD: factor dimension mismatch");
      us.push_back(&a.factors[k]);
      scales.push_back(std::sqrt(a.coefs[k]));
    }
  }
  const int k = static_cast<int>(us.size());
  if (k == 0) {
    if (a.base <= 0.0) throw RankError("SqrtOperator: zero operator");
    return op;
  }

  // Gram matrix of the scaled factors; its eigenpairs give the spectral
  // data of the low-rank block without ever forming an N x N matrix.
  MatrixXd ut(k, a.dim);
  for (int i = 0; i < k; ++i)
    ut.row(i) = scales[i] * as_eigen(*us[i]).transpose();
  MatrixXd gram = ut * ut.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("SqrtOperator: Gram eigendecomposition failed");

  const double dmax = eig.eigenvalues().maxCoeff();
  const double tol = 1e-12 * std::max(dmax, 0.0);
  for (int l = 0; l < k; ++l) {
    const double d = eig.eigenvalues()[l];
    if (d <= tol) continue;  // rank-deficient ensembles must not produce NaN
    VectorXd z = (ut.transpose() * eig.eigenvectors().col(l)) / std::sqrt(d);
    op.eigs_.push_back(d);
    op.basis_.insert(op.basis_.end(), z.data(), z.data() + a.dim);
  }
  if (a.base <= 0.0 && op.rank() < a.dim)
    throw RankError("SqrtOperator: rank-deficient operator with zero base");
  return op;
}

void SqrtOperator::apply(ConstSpan v, MutSpan out) const {
  if (static_cast<int>(v.size()) != n_)
    throw std::invalid_argument("SqrtOperator::apply: dimension mismatch");
  const double sb = std::sqrt(base_);
  kernels::copy_scaled(sb, v, out);
  for (int l = 0; l < rank(); ++l) {
    ConstSpan z = basis_column(l);
    kernels::axpy((std::sqrt(base_ + eigs_[l]) - sb) * kernels::dot(z, v), z, out);
  }
}

void SqrtOperator::apply_inverse(ConstSpan v, MutSpan out) const {
  if (static_cast<int>(v.size()) != n_)
    throw std::invalid_argument("SqrtOperator::apply_inverse: dimension mismatch");
  const double isb = base_ > 0.0 ? 1.0 / std::sqrt(base_) : 0.0;
  kernels::copy_scaled(isb, v, out);
  for (int l = 0; l < rank(); ++l) {
    ConstSpan z = basis_column(l);
    kernels::axpy((1.0 / std::sqrt(base_ + eigs_[l]) - isb) * kernels::dot(z, v), z, out);
  }
}

void SqrtOperator::apply_spd(ConstSpan v, MutSpan out) const {
  kernels::copy_scaled(base_, v, out);
  for (int l = 0; l < rank(); ++l) {
    ConstSpan z = basis_column(l);
    kernels::axpy(eigs_[l] * kernels::dot(z, v), z, out);
  }
}

Vec SqrtOperator::apply(ConstSpan v) const {
  Vec out(n_);
  apply(v, out);
  return out;
}

Vec SqrtOperator::dense() const {
  Vec out(std::size_t(n_) * n_, 0.0);
  Vec e(n_, 0.0), col(n_);
  for (int j = 0; j < n_; ++j) {
    e[j] = 1.0;
    apply(e, col);
    for (int i = 0; i < n_; ++i) out[std::size_t(i) * n_ + j] = col[i];
    e[j] = 0.0;
  }
  return out;
}

SqrtDerivativeOp sqrt_derivative(const SqrtOperator& b, const SymmetricLowRank& da) {
  if (da.dirs.size() != da.coefs.size())
    throw std::invalid_argument("sqrt_derivative: dir/coef count mismatch");
  SpanBasis w = extend_basis(b, da.dirs);
  const int m = w.m;
  // dA in the basis, then the Sylvester solve B X + X B = dA is an
  // elementwise division by b_a + b_b in B's eigencoordinates.
  MatrixXd h = MatrixXd::Zero(m, m);
  for (std::size_t k = 0; k < da.dirs.size(); ++k) {
    Vec g = w.project(da.dirs[k]);
    Eigen::Map<VectorXd> gv(g.data(), m);
    h.noalias() += da.coefs[k] * gv * gv.transpose();
  }
  for (int a = 0; a < m; ++a)
    for (int c = 0; c < m; ++c) h(a, c) /= (w.bvals[a] + w.bvals[c]);

  SqrtDerivativeOp op;
  op.n_ = w.n;
  op.m_ = m;
  op.basis_ = std::move(w.cols);
  op.coeff_.assign(h.data(), h.data() + std::size_t(m) * m);  // symmetric
  return op;
}

void SqrtDerivativeOp::apply(ConstSpan v, MutSpan out) const {
  Vec g(m_);
  for (int a = 0; a < m_; ++a)
    g[a] = kernels::dot({basis_.data() + std::size_t(a) * n_, std::size_t(n_)}, v);
  fill_zero(out);
  for (int a = 0; a < m_; ++a) {
    double s = 0.0;
    for (int c = 0; c < m_; ++c) s += coeff_[std::size_t(a) * m_ + c] * g[c];
    kernels::axpy(s, {basis_.data() + std::size_t(a) * n_, std::size_t(n_)}, out);
  }
}

Vec SqrtDerivativeOp::dense(int n) const {
  Vec out(std::size_t(n) * n, 0.0);
  Vec e(n, 0.0), col(n);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    apply(e, col);
    for (int i = 0; i < n; ++i) out[std::size_t(i) * n + j] = col[i];
    e[j] = 0.0;
  }
  return out;
}

Vec phi_lower_half(ConstSpan m, int n) {
  Vec out(std::size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) out[std::size_t(i) * n + j] = m[std::size_t(i) * n + j];
    out[std::size_t(i) * n + i] = 0.5 * m[std::size_t(i) * n + i];
  }
  return out;
}

Vec divergence_of_sqrt(const SqrtOperator& b, const SqrtDerivativeFamily& family) {
  const int n = b.dim();
  Vec div(n, 0.0);
  const int k = static_cast<int>(family.dirs.size());
  if (k == 0) return div;

  SpanBasis w = extend_basis(b, family.dirs);
  const int m = w.m;
  Vec acc(m, 0.0);  // sum_k scale_k * a_k in basis coordinates
  Vec ak(m);
  for (int kk = 0; kk < k; ++kk) {
    if (family.scale[kk] == 0.0) continue;
    Vec g = w.project(family.dirs[kk]);
    Vec f = w.project(family.weight_column(kk));
    for (int a = 0; a < m; ++a) {
      double s = 0.0;
      for (int c = 0; c < m; ++c) s += g[c] * f[c] / (w.bvals[a] + w.bvals[c]);
      ak[a] = g[a] * s;
    }
    for (int a = 0; a < m; ++a) acc[a] += family.scale[kk] * ak[a];
  }
  w.accumulate(acc, div);
  return div;
}

std::optional<double> logdet_I_plus_jacobian(const SqrtOperator& b,
                                             const SqrtDerivativeFamily& family,
                                             ConstSpan p, double coef) {
  const int k = static_cast<int>(family.dirs.size());
  if (k == 0 || coef == 0.0) return 0.0;
  SpanBasis w = extend_basis(b, family.dirs);
  const int m = w.m;
  Vec pt = w.project(p);

  // J = sum_k x_k y_k^T with y_k the weight column and x_k = scale_k * W rho_k;
  // det(I + coef J) = det(I_K + coef Y^T X) evaluated in basis coordinates.
  std::vector<Vec> rho(k, Vec(m));
  std::vector<Vec> f(k);
  for (int kk = 0; kk < k; ++kk) {
    Vec g = w.project(family.dirs[kk]);
    f[kk] = w.project(family.weight_column(kk));
    for (int a = 0; a < m; ++a) {
      double s = 0.0;
      for (int c = 0; c < m; ++c) s += g[c] * pt[c] / (w.bvals[a] + w.bvals[c]);
      rho[kk][a] = g[a] * s;
    }
  }
  MatrixXd small = MatrixXd::Identity(k, k);
  for (int row = 0; row < k; ++row)
    for (int col = 0; col < k; ++col) {
      double s = 0.0;
      for (int a = 0; a < m; ++a) s += f[row][a] * rho[col][a];
      small(row, col) += coef * family.scale[col] * s;
    }
  double sign = 1.0;
  const double lad = logabsdet_with_sign(small, sign);
  if (sign <= 0.0) return std::nullopt;
  return lad;
}

Vec noisy_divergence(const MatrixFieldApply& field, ConstSpan q, double eps,
                     int samples, RandomSource& rng) {
  if (eps <= 0.0) throw std::invalid_argument("noisy_divergence: eps must be positive");
  if (samples < 1) throw std::invalid_argument("noisy_divergence: samples must be >= 1");
  const std::size_t n = q.size();
  Vec acc(n, 0.0), r(n), shifted(n), t0(n), t1(n);
  for (int s = 0; s < samples; ++s) {
    rng.fill_normal(r);
    copy_into(q, shifted);
    kernels::axpy(eps, r, shifted);
    field(shifted, r, t1);
    field(q, r, t0);
    kernels::axpy(-1.0, t0, t1);
    kernels::axpy(1.0, t1, acc);
  }
  kernels::copy_scaled(1.0 / (eps * samples), acc, acc);
  return acc;
}

}  // namespace eqn
