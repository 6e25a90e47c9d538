#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "eqn/errors.hpp"
#include "eqn/lowrank.hpp"
#include "test_helpers.hpp"

using namespace eqn;
using testutil::dense_sqrt;
using testutil::to_eigen;

namespace {

LowRankSPD random_spd(std::mt19937_64& gen, int n, int k, double base = 1.0) {
  LowRankSPD a;
  a.dim = n;
  a.base = base;
  std::uniform_real_distribution<double> coef(0.1, 2.0);
  for (int i = 0; i < k; ++i) {
    a.factors.push_back(testutil::random_vec(gen, n));
    a.coefs.push_back(coef(gen));
  }
  return a;
}

}  // namespace

TEST_CASE("sqrt_apply with no factors is the identity") {
  LowRankSPD a;
  a.dim = 4;
  auto b = SqrtOperator::build(a);
  Vec v{1.0, -2.0, 3.0, 0.5};
  CHECK(b.apply(v) == v);
}

TEST_CASE("sqrt_apply on a single eigendirection") {
  // A = I + 3 e1 e1^T  =>  B e1 = 2 e1
  LowRankSPD a;
  a.dim = 3;
  a.factors = {{1.0, 0.0, 0.0}};
  a.coefs = {3.0};
  auto b = SqrtOperator::build(a);
  Vec out = b.apply(Vec{1.0, 0.0, 0.0});
  CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.0);
  // orthogonal direction untouched
  out = b.apply(Vec{0.0, 1.0, 0.0});
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("sqrt matches the dense principal root on random instances") {
  std::mt19937_64 gen(101);
  auto a = random_spd(gen, 30, 5);
  auto b = SqrtOperator::build(a);
  Eigen::MatrixXd ref = dense_sqrt(to_eigen(a.dense(), 30));
  Eigen::MatrixXd got = to_eigen(b.dense(), 30);
  CHECK((ref - got).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("dense reconstruction of LowRankSPD is consistent") {
  std::mt19937_64 gen(77);
  auto a = random_spd(gen, 40, 7);
  auto d = a.dense();
  // symmetry and unit diagonal floor
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j)
      CHECK(d[40u * i + j] == doctest::Approx(d[40u * j + i]).epsilon(1e-12));
}

TEST_CASE("sqrt_apply twice equals applying A") {
  std::mt19937_64 gen(2023);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 5 + int(gen() % 46);   // up to 50
    const int k = 1 + int(gen() % 10);   // up to 10
    auto a = random_spd(gen, n, k);
    auto b = SqrtOperator::build(a);
    Vec v = testutil::random_vec(gen, n);
    Vec bv(n), bbv(n), av(n);
    b.apply(v, bv);
    b.apply(bv, bbv);
    b.apply_spd(v, av);
    double scale = std::sqrt(kernels::sumsq(av)) + 1.0;
    for (int i = 0; i < n; ++i) CHECK(std::abs(bbv[i] - av[i]) < 1e-10 * scale);

    // inverse really inverts
    Vec back(n);
    b.apply_inverse(bv, back);
    for (int i = 0; i < n; ++i) CHECK(back[i] == doctest::Approx(v[i]).epsilon(1e-9));
  }
}

TEST_CASE("rank-deficient factor sets do not produce NaN") {
  LowRankSPD a;
  a.dim = 3;
  Vec u{1.0, 1.0, 0.0};
  a.factors = {u, u, u};  // all parallel
  a.coefs = {0.5, 0.5, 0.5};
  auto b = SqrtOperator::build(a);
  CHECK(b.rank() == 1);
  Vec out = b.apply(Vec{1.0, 0.0, 0.0});
  for (double x : out) CHECK(std::isfinite(x));
}

TEST_CASE("zero-base operator requires full rank") {
  LowRankSPD a;
  a.dim = 3;
  a.base = 0.0;
  a.factors = {{1, 0, 0}, {0, 1, 0}};
  a.coefs = {1.0, 1.0};
  CHECK_THROWS_AS(SqrtOperator::build(a), RankError);
}

TEST_CASE("phi helper: lower plus half diagonal") {
  Vec m{2.0, 0.0, 0.0, 4.0};
  Vec phi = phi_lower_half(m, 2);
  CHECK(phi[0] == 1.0);
  CHECK(phi[3] == 2.0);
  CHECK(phi[1] == 0.0);
  CHECK(phi[2] == 0.0);

  Vec m2{1.0, 2.0, 3.0, 4.0};
  Vec phi2 = phi_lower_half(m2, 2);
  CHECK(phi2[0] == 0.5);
  CHECK(phi2[1] == 0.0);
  CHECK(phi2[2] == 3.0);
  CHECK(phi2[3] == 2.0);
}

TEST_CASE("sqrt_derivative of a zero perturbation is the zero operator") {
  std::mt19937_64 gen(5);
  auto a = random_spd(gen, 6, 3);
  auto b = SqrtOperator::build(a);
  SymmetricLowRank da;
  da.dirs = {testutil::random_vec(gen, 6)};
  da.coefs = {0.0};
  auto d = sqrt_derivative(b, da);
  Vec v = testutil::random_vec(gen, 6);
  Vec out(6);
  d.apply(v, out);
  CHECK(testutil::max_abs(out) < 1e-14);
}

TEST_CASE("sqrt_derivative matches central finite differences") {
  // Smooth family A(t) = I + sum_k g_k(t) u_k(t) u_k(t)^T.
  std::mt19937_64 gen(99);
  const int n = 6, k = 3;
  std::vector<Vec> u0, w;
  Vec g0;
  for (int i = 0; i < k; ++i) {
    u0.push_back(testutil::random_vec(gen, n));
    w.push_back(testutil::random_vec(gen, n, 0.5));
    g0.push_back(0.4 + 0.3 * double(i));
  }

  auto family_at = [&](double t) {
    LowRankSPD a;
    a.dim = n;
    for (int i = 0; i < k; ++i) {
      Vec ui = u0[i];
      kernels::axpy(t, w[i], ui);
      a.factors.push_back(ui);
      a.coefs.push_back(g0[i] * (1.0 + 0.3 * std::sin(t + i)));
    }
    return a;
  };

  const double t0 = 0.2;
  auto a = family_at(t0);
  auto b = SqrtOperator::build(a);

  // dA/dt expressed as symmetric rank-one terms:
  //   g' u u^T + g/2 [(u+w)(u+w)^T - (u-w)(u-w)^T]
  SymmetricLowRank da;
  for (int i = 0; i < k; ++i) {
    Vec ui = u0[i];
    kernels::axpy(t0, w[i], ui);
    const double gi = g0[i] * (1.0 + 0.3 * std::sin(t0 + i));
    const double gpi = g0[i] * 0.3 * std::cos(t0 + i);
    da.dirs.push_back(ui);
    da.coefs.push_back(gpi);
    Vec plus = ui, minus = ui;
    kernels::axpy(1.0, w[i], plus);
    kernels::axpy(-1.0, w[i], minus);
    da.dirs.push_back(plus);
    da.coefs.push_back(gi / 2.0);
    da.dirs.push_back(minus);
    da.coefs.push_back(-gi / 2.0);
  }

  auto dop = sqrt_derivative(b, da);
  Eigen::MatrixXd got = to_eigen(dop.dense(n), n);

  const double eps = 1e-4;
  Eigen::MatrixXd bp = dense_sqrt(to_eigen(family_at(t0 + eps).dense(), n));
  Eigen::MatrixXd bm = dense_sqrt(to_eigen(family_at(t0 - eps).dense(), n));
  Eigen::MatrixXd fd = (bp - bm) / (2.0 * eps);

  const double rel = (got - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff();
  CHECK(rel < 1e-6);
}

TEST_CASE("divergence of a constant field is zero") {
  std::mt19937_64 gen(11);
  auto a = random_spd(gen, 4, 2);
  auto b = SqrtOperator::build(a);
  SqrtDerivativeFamily fam;  // empty family: A does not depend on q
  fam.dim = 4;
  Vec div = divergence_of_sqrt(b, fam);
  CHECK(testutil::max_abs(div) == 0.0);
}

TEST_CASE("divergence of the scalar family sqrt(1+q1^2) I") {
  // B(q) = sqrt(1+q1^2) I in N=2; div(B^T) = (q1/sqrt(1+q1^2), 0).
  const double q1 = 0.7;
  LowRankSPD a;
  a.dim = 2;
  a.factors = {{1.0, 0.0}, {0.0, 1.0}};
  a.coefs = {q1 * q1, q1 * q1};
  auto b = SqrtOperator::build(a);

  SqrtDerivativeFamily fam;
  fam.dim = 2;
  fam.dirs = {{1.0, 0.0}, {0.0, 1.0}};
  fam.scale = {1.0, 1.0};
  fam.weight = {2.0 * q1, 0.0, 2.0 * q1, 0.0};  // column-major: dA_j = 2 q1 delta_{j,1} I
  Vec div = divergence_of_sqrt(b, fam);
  CHECK(div[0] == doctest::Approx(q1 / std::sqrt(1.0 + q1 * q1)).epsilon(1e-12));
  CHECK(std::abs(div[1]) < 1e-14);
}

TEST_CASE("logdet of I + jacobian contraction: dense cross-check") {
  // Same scalar family; J(p) = d(B(q) p)/dq has entries dB/dq1 p_i in col 1.
  const double q1 = 0.4;
  LowRankSPD a;
  a.dim = 2;
  a.factors = {{1.0, 0.0}, {0.0, 1.0}};
  a.coefs = {q1 * q1, q1 * q1};
  auto b = SqrtOperator::build(a);
  SqrtDerivativeFamily fam;
  fam.dim = 2;
  fam.dirs = {{1.0, 0.0}, {0.0, 1.0}};
  fam.scale = {1.0, 1.0};
  fam.weight = {2.0 * q1, 0.0, 2.0 * q1, 0.0};

  Vec p{0.3, -1.1};
  const double coef = 0.25;
  auto got = logdet_I_plus_jacobian(b, fam, p, coef);
  REQUIRE(got.has_value());

  const double dbdq1 = q1 / std::sqrt(1.0 + q1 * q1);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2, 2);
  j(0, 0) = dbdq1 * p[0];
  j(1, 0) = dbdq1 * p[1];
  const double ref = std::log((Eigen::MatrixXd::Identity(2, 2) + coef * j).determinant());
  CHECK(*got == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("noisy divergence: constant field gives zero") {
  MatrixFieldApply field = [](ConstSpan, ConstSpan v, MutSpan out) {
    copy_into(v, out);
    kernels::copy_scaled(1.7, out, out);
  };
  PhiloxRng rng(1, 1);
  Vec q{0.2, 0.3};
  Vec div = noisy_divergence(field, q, 0.1, 64, rng);
  CHECK(testutil::max_abs(div) < 1e-13);
}

TEST_CASE("noisy divergence: diagonal coordinate field converges to (1,1)") {
  MatrixFieldApply field = [](ConstSpan q, ConstSpan v, MutSpan out) {
    out[0] = q[0] * v[0];
    out[1] = q[1] * v[1];
  };
  PhiloxRng rng(8, 0);
  Vec q{0.5, 2.0};
  const int samples = 100000;
  Vec div = noisy_divergence(field, q, 0.05, samples, rng);
  // Z_i / eps = R_i^2 exactly for this field: mean 1, var 2.
  const double se3 = 3.0 * std::sqrt(2.0 / samples);
  CHECK(std::abs(div[0] - 1.0) < se3);
  CHECK(std::abs(div[1] - 1.0) < se3);
}

TEST_CASE("noisy divergence bias order is ~2 in eps") {
  // Field sqrt(1+q1^2) I; exact divergence known, bias isolated with many samples.
  auto apply_b = [](ConstSpan q, ConstSpan v, MutSpan out) {
    const double s = std::sqrt(1.0 + q[0] * q[0]);
    kernels::copy_scaled(s, v, out);
  };
  Vec q{1.5, 0.0};
  const double exact0 = q[0] / std::sqrt(1.0 + q[0] * q[0]);
  auto bias_at = [&](double eps) {
    PhiloxRng rng(4242, 0);
    Vec d = noisy_divergence(apply_b, q, eps, 500000, rng);
    return std::abs(d[0] - exact0);
  };
  const double b1 = bias_at(0.8);
  const double b2 = bias_at(0.4);
  const double order = std::log2(b1 / b2);
  CHECK(order >= 1.8);
  CHECK(order <= 2.6);
}

TEST_CASE("apply cost grows linearly in N at fixed K" * doctest::timeout(120)) {
  std::mt19937_64 gen(31);
  auto time_n = [&](int n) {
    auto a = random_spd(gen, n, 8);
    auto b = SqrtOperator::build(a);
    Vec v = testutil::random_vec(gen, n), out(n);
    // warm-up
    b.apply(v, out);
    auto t0 = std::chrono::steady_clock::now();
    const int reps = 4000;
    for (int i = 0; i < reps; ++i) b.apply(v, out);
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
  };
  // median of 3 to damp scheduling noise
  auto med3 = [&](int n) {
    double a = time_n(n), b = time_n(n), c = time_n(n);
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
  };
  const double t1 = med3(4000);
  const double t2 = med3(8000);
  CHECK(t2 / t1 < 2.0 * 1.3);  // at most 1.3x over proportional
}
