#pragma once

#include <functional>
#include <optional>

#include "eqn/rng.hpp"
#include "eqn/vec.hpp"

// Low-rank-plus-identity SPD algebra.  Everything here is O(N * poly(K)):
// the symmetric square root, its directional derivatives, and the divergence
// assembly never densify an N x N matrix.  The square root is obtained by
// eigendecomposing the K x K Gram matrix of the (scaled) factors.

namespace eqn {

// A = base * I + sum_k coefs[k] * factors[k] factors[k]^T, coefs[k] >= 0.
// base is 1 for the blended/local preconditioners; 0 is allowed but then
// the factors must span R^N for A to be invertible.
struct LowRankSPD {
  int dim = 0;
  double base = 1.0;
  std::vector<Vec> factors;
  Vec coefs;

  // Dense reconstruction (tests and small-N checks only), row-major.
  Vec dense() const;
};

// Symmetric principal square root B = A^{1/2} with cached spectral data of
// the low-rank block.  Immutable after construction; concurrent apply is safe.
class SqrtOperator {
 public:
  static SqrtOperator build(const LowRankSPD& a);

  int dim() const noexcept { return n_; }
  int rank() const noexcept { return static_cast<int>(eigs_.size()); }
  double base() const noexcept { return base_; }

  void apply(ConstSpan v, MutSpan out) const;          // B v
  void apply_inverse(ConstSpan v, MutSpan out) const;  // B^{-1} v
  void apply_spd(ConstSpan v, MutSpan out) const;      // A v

  Vec apply(ConstSpan v) const;

  // Spectral data of the low-rank block: orthonormal columns z_l (length n,
  // stored contiguously) and eigenvalues d_l > 0 of the low-rank part, so
  // A = base I + sum_l d_l z_l z_l^T.
  ConstSpan basis_column(int l) const { return {basis_.data() + std::size_t(l) * n_, std::size_t(n_)}; }
  const Vec& eigenvalues() const noexcept { return eigs_; }

  Vec dense() const;  // dense B for tests

 private:
  int n_ = 0;
  double base_ = 1.0;
  Vec basis_;  // column-major n x r
  Vec eigs_;   // r
};

// A symmetric low-rank perturbation dA = sum_k coefs[k] dirs[k] dirs[k]^T.
struct SymmetricLowRank {
  std::vector<Vec> dirs;
  Vec coefs;
};

// Action of the derivative of the principal square root along dA, i.e. the
// unique symmetric X with B X + X B = dA.  Solved in the eigenbasis of B
// restricted to span(B's factors, dA's directions).
class SqrtDerivativeOp {
 public:
  void apply(ConstSpan v, MutSpan out) const;
  Vec dense(int n) const;  // tests

 private:
  friend SqrtDerivativeOp sqrt_derivative(const SqrtOperator&, const SymmetricLowRank&);
  Vec basis_;   // column-major n x m
  Vec coeff_;   // m x m symmetric H, row-major
  int n_ = 0, m_ = 0;
};

SqrtDerivativeOp sqrt_derivative(const SqrtOperator& b, const SymmetricLowRank& da);

// Reference helper for the lower-triangular-factor derivative map,
// Phi(M) = strict_lower(M) + diag(M)/2 on a dense row-major matrix.
Vec phi_lower_half(ConstSpan m, int n);

// Coordinate family of perturbations of A = B B^T:
//   dA_j = sum_k scale[k] * weight(j,k) * dirs[k] dirs[k]^T ,  j = 0..N-1.
// weight is stored column-major (column k contiguous, length N).
struct SqrtDerivativeFamily {
  std::vector<Vec> dirs;
  Vec scale;
  Vec weight;  // N x K, column-major
  int dim = 0;

  ConstSpan weight_column(int k) const {
    return {weight.data() + std::size_t(k) * dim, std::size_t(dim)};
  }
};

// div(B^T) assembled from the family: component i equals
// sum_j d_j B_{ij} with dB the symmetric-root derivative above.
Vec divergence_of_sqrt(const SqrtOperator& b, const SqrtDerivativeFamily& family);

// log |det(I + coef * J)| with J = d(B(q) p)/dq contracted against a fixed
// vector p, computed with the matrix determinant lemma in the K-dimensional
// factor subspace.  Returns nullopt when the determinant is not positive.
std::optional<double> logdet_I_plus_jacobian(const SqrtOperator& b,
                                             const SqrtDerivativeFamily& family,
                                             ConstSpan p, double coef);

// Position-dependent matrix field: out = M(q) v.
using MatrixFieldApply =
    std::function<void(ConstSpan q, ConstSpan v, MutSpan out)>;

// Appendix-style randomized divergence estimate:
//   mean over samples of [M(q + eps R) - M(q)] R / eps,  R ~ N(0, I).
Vec noisy_divergence(const MatrixFieldApply& field, ConstSpan q, double eps,
                     int samples, RandomSource& rng);

}  // namespace eqn
