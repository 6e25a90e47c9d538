#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "eqn/errors.hpp"
#include "eqn/targets.hpp"
#include "test_helpers.hpp"

using namespace eqn;

namespace {

// Central-difference gradient with steps scaled by coordinate magnitude.
Vec fd_gradient(const TargetDensity& t, ConstSpan x) {
  Vec g(x.size()), p(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    const double xi = p[i];
    p[i] = xi + h;
    const double fp = t.log_density(p);
    p[i] = xi - h;
    const double fm = t.log_density(p);
    p[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

void check_gradient_fd(const TargetDensity& t, ConstSpan x, double tol = 1e-5) {
  Vec an = t.gradient(x);
  Vec fd = fd_gradient(t, x);
  double scale = 1.0;
  for (double v : an) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < an.size(); ++i)
    CHECK(std::abs(an[i] - fd[i]) <= tol * scale);
}

}  // namespace

TEST_CASE("gaussian examples") {
  GaussianTarget iso(Vec{1.0, 1.0});
  CHECK(iso.log_density(Vec{0.0, 0.0}) == 0.0);  // mode pinned to 0

  GaussianTarget aniso(Vec{1.0, 100.0});
  CHECK(aniso.log_density(Vec{1.0, 0.0}) == doctest::Approx(-0.5).epsilon(1e-14));
  Vec g = aniso.gradient(Vec{1.0, 1.0});
  CHECK(g[0] == doctest::Approx(-1.0));
  CHECK(g[1] == doctest::Approx(-0.01));
  CHECK(aniso.condition_number() == doctest::Approx(100.0));

  CHECK_THROWS_AS(aniso.log_density(Vec{1.0}), std::invalid_argument);
  CHECK(aniso.log_density(Vec{std::nan(""), 0.0}) == kNegInf);
}

TEST_CASE("dense gaussian matches diagonal when covariance is diagonal") {
  GaussianTarget diag(Vec{2.0, 5.0});
  GaussianTarget dense(2, Vec{2.0, 0.0, 0.0, 5.0});
  Vec x{0.3, -1.2};
  CHECK(diag.log_density(x) == doctest::Approx(dense.log_density(x)).epsilon(1e-12));
}

TEST_CASE("ring target is rotationally symmetric") {
  RingTarget ring(2.0, 0.5);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> angle(0, 6.28);
  for (int i = 0; i < 25; ++i) {
    const double r = 0.5 + 3.0 * std::generate_canonical<double, 53>(gen);
    const double a = angle(gen), b = angle(gen);
    const double la = ring.log_density(Vec{r * std::cos(a), r * std::sin(a)});
    const double lb = ring.log_density(Vec{r * std::cos(b), r * std::sin(b)});
    CHECK(la == doctest::Approx(lb).epsilon(1e-12));
  }
  // on the circle the gradient's radial component vanishes
  Vec g = ring.gradient(Vec{2.0 * std::cos(0.7), 2.0 * std::sin(0.7)});
  CHECK(std::abs(g[0] * std::cos(0.7) + g[1] * std::sin(0.7)) < 1e-12);
  CHECK_THROWS_AS(ring.gradient(Vec{0.0, 0.0}), DomainError);
}

namespace {

// Independent straight-from-the-model oracle for the mixture posterior:
// plain products for the likelihood, textbook prior pdfs, and the embedding
// Jacobian assembled via the per-variable chain (not the sum-of-logs form
// the implementation uses).
double mixture_oracle(const Vec& y, ConstSpan th) {
  const double mu[3] = {th[0], th[1], th[2]};
  const double lam[3] = {std::exp(th[3]), std::exp(th[4]), std::exp(th[5])};
  const double v1 = 1.0 / (1.0 + std::exp(-th[6]));
  const double v2 = 1.0 / (1.0 + std::exp(-th[7]));
  const double z[3] = {v1, (1 - v1) * v2, (1 - v1) * (1 - v2)};
  const double beta = std::exp(th[8]);

  double mean = 0, lo = y[0], hi = y[0];
  for (double v : y) {
    mean += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  mean /= double(y.size());
  const double r = hi - lo;
  const double kappa = 4.0 / (r * r);
  const double alpha = 2.0, g = 0.2;
  const double h = 100.0 * g / (alpha * r * r);

  double ll = 0.0;
  for (double yi : y) {
    double rho = 0.0;
    for (int k = 0; k < 3; ++k)
      rho += z[k] * std::sqrt(lam[k] / (2.0 * M_PI)) *
             std::exp(-0.5 * lam[k] * (yi - mu[k]) * (yi - mu[k]));
    ll += std::log(rho);
  }
  double lp = 0.0;
  for (int k = 0; k < 3; ++k) {
    lp += std::log(std::sqrt(kappa / (2.0 * M_PI)) *
                   std::exp(-0.5 * kappa * (mu[k] - mean) * (mu[k] - mean)));
    lp += std::log(std::pow(beta, alpha) / std::tgamma(alpha) *
                   std::pow(lam[k], alpha - 1.0) * std::exp(-beta * lam[k]));
  }
  lp += std::log(2.0);  // Dirichlet(1,1,1) density on the simplex
  lp += std::log(std::pow(h, g) / std::tgamma(g) * std::pow(beta, g - 1.0) *
                 std::exp(-h * beta));

  // |d(mu,lam,z1,z2,beta)/d theta| per variable: exp maps give lam_k and beta,
  // the stick map contributes v1(1-v1) * v2(1-v2) * (1-v1).
  double lj = std::log(lam[0]) + std::log(lam[1]) + std::log(lam[2]) + std::log(beta);
  lj += std::log(v1 * (1 - v1)) + std::log(v2 * (1 - v2)) + std::log(1 - v1);

  return ll + lp + lj;
}

}  // namespace

TEST_CASE("mixture log density matches the independent oracle") {
  MixtureModelTarget::Params truth{{-1.0, 0.5, 2.0}, {1.0, 2.0, 0.5}, {0.3, 0.4, 0.3}, 1.0};
  Vec y = MixtureModelTarget::generate_synthetic(20, truth, 99);
  MixtureModelTarget target(y);

  MixtureModelTarget::Params p{{-0.8, 0.6, 1.7}, {1.2, 1.5, 0.7}, {0.25, 0.45, 0.30}, 0.8};
  Vec th = MixtureModelTarget::embed(p);
  const double got = target.log_density(th);
  const double want = mixture_oracle(y, th);
  CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
}

TEST_CASE("mixture posterior is label-permutation invariant") {
  MixtureModelTarget::Params truth{{-1.0, 0.5, 2.0}, {1.5, 2.0, 1.0}, {0.3, 0.4, 0.3}, 1.0};
  Vec y = MixtureModelTarget::generate_synthetic(40, truth, 5);
  MixtureModelTarget target(y);

  MixtureModelTarget::Params p{{-0.9, 0.4, 1.8}, {1.3, 1.8, 0.9}, {0.2, 0.5, 0.3}, 1.1};
  const double base = target.log_density(MixtureModelTarget::embed(p));
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& s : perms) {
    MixtureModelTarget::Params q;
    for (int k = 0; k < 3; ++k) {
      q.mu[k] = p.mu[s[k]];
      q.lambda[k] = p.lambda[s[k]];
      q.z[k] = p.z[s[k]];
    }
    q.beta = p.beta;
    const double v = target.log_density(MixtureModelTarget::embed(q));
    CHECK(std::abs(v - base) <= 1e-12 * std::max(1.0, std::abs(base)));
  }
}

TEST_CASE("mixture synthetic data generator") {
  CHECK_THROWS_AS(MixtureModelTarget::generate_synthetic(
                      0, MixtureModelTarget::Params{{0, 1, 2}, {1, 1, 1}, {0.3, 0.3, 0.4}, 1.0}, 1),
                  std::invalid_argument);

  // degenerate weights: all samples from component 1
  MixtureModelTarget::Params one{{5.0, 0.0, 0.0}, {100.0, 1.0, 1.0}, {1.0, 0.0, 0.0}, 1.0};
  Vec y = MixtureModelTarget::generate_synthetic(500, one, 3);
  for (double v : y) CHECK(std::abs(v - 5.0) < 1.0);

  // equal weights, separated means: proportions within 3 binomial SEs
  MixtureModelTarget::Params eq{{-10.0, 0.0, 10.0},
                                {4.0, 4.0, 4.0},
                                {1.0 / 3, 1.0 / 3, 1.0 / 3},
                                1.0};
  const int n = 30000;
  Vec big = MixtureModelTarget::generate_synthetic(n, eq, 21);
  int c[3] = {0, 0, 0};
  for (double v : big) {
    if (v < -5)
      ++c[0];
    else if (v < 5)
      ++c[1];
    else
      ++c[2];
  }
  const double se = std::sqrt((1.0 / 3) * (2.0 / 3) / n);
  for (int k = 0; k < 3; ++k)
    CHECK(std::abs(c[k] / double(n) - 1.0 / 3) < 3.0 * se);

  // invalid parameters
  MixtureModelTarget::Params bad = eq;
  bad.lambda[1] = -1.0;
  CHECK_THROWS_AS(MixtureModelTarget::generate_synthetic(10, bad, 1), std::invalid_argument);
}

TEST_CASE("gradient matches finite differences at random points") {
  std::mt19937_64 gen(7);

  GaussianTarget gauss(Vec{1.0, 10.0, 0.3});
  RingTarget ring(2.0, 0.5);
  MixtureModelTarget::Params truth{{-1.0, 0.5, 2.0}, {1.5, 2.0, 1.0}, {0.3, 0.4, 0.3}, 1.0};
  MixtureModelTarget mix(MixtureModelTarget::generate_synthetic(30, truth, 11));
  auto coxdata = LogGaussianCoxTarget::generate_synthetic(4, 1.5, 0.1, 17);
  LogGaussianCoxTarget cox(4, coxdata.counts);

  const int points = 100;
  for (int i = 0; i < points; ++i) {
    check_gradient_fd(gauss, testutil::random_vec(gen, 3, 1.5));
    Vec rx = testutil::random_vec(gen, 2, 1.0);
    rx[0] += 2.0;  // keep away from the origin
    check_gradient_fd(ring, rx);
  }
  for (int i = 0; i < 20; ++i) {
    Vec th = MixtureModelTarget::embed(truth);
    Vec noise = testutil::random_vec(gen, 9, 0.15);
    for (int j = 0; j < 9; ++j) th[j] += noise[j];
    check_gradient_fd(mix, th);
  }
  for (int i = 0; i < 5; ++i) {
    Vec x(cox.dim());
    for (auto& v : x) v = std::normal_distribution<double>(1.0, 0.5)(gen);
    x[cox.dim() - 2] = std::log(1.2) + 0.1 * i;
    x[cox.dim() - 1] = std::log(0.12) + 0.05 * i;
    check_gradient_fd(cox, x);
  }
}

TEST_CASE("cox covariance structure") {
  Vec cov = LogGaussianCoxTarget::covariance(5, 1.91, 1.0 / 33.0);
  const int n = 25;
  // zero separation equals sigma^2
  for (int a = 0; a < n; ++a)
    CHECK(cov[std::size_t(a) * n + a] == doctest::Approx(1.91).epsilon(1e-14));
  // decays monotonically with grid distance from the corner cell
  double prev = cov[0];
  for (int j = 1; j < 5; ++j) {
    CHECK(cov[j] < prev);
    prev = cov[j];
  }
}

TEST_CASE("cox synthetic generation") {
  // degenerate prior: sigma^2 -> 0 gives a flat field at mu
  auto flat = LogGaussianCoxTarget::generate_synthetic(2, 1e-12, 0.1, 1);
  const double mu = std::log(126.0) - 0.5e-12;
  for (double v : flat.field) CHECK(std::abs(v - mu) < 1e-4);

  // counts are nonnegative integers for any seed
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto s = LogGaussianCoxTarget::generate_synthetic(6, 1.91, 1.0 / 33.0, seed);
    for (int c : s.counts) CHECK(c >= 0);
  }

  // empirical mean of the field within 3 exact standard errors of mu
  const int grid = 16, reps = 12;
  Vec cov = LogGaussianCoxTarget::covariance(grid, 1.91, 1.0 / 33.0);
  const int n = grid * grid;
  double s11 = 0;
  for (double v : cov) s11 += v;
  const double var_mean = s11 / double(n) / double(n) / reps;
  const double mu16 = std::log(126.0) - 0.5 * 1.91;
  double acc = 0;
  for (int rep = 0; rep < reps; ++rep) {
    auto s = LogGaussianCoxTarget::generate_synthetic(grid, 1.91, 1.0 / 33.0, 100 + rep);
    acc += kernels::sum(s.field) / n;
  }
  acc /= reps;
  CHECK(std::abs(acc - mu16) < 3.0 * std::sqrt(var_mean));
}

TEST_CASE("dataset files round-trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "eqn_targets_test";
  fs::create_directories(dir);

  Vec y{0.1, 0.2, 0.35};
  save_mixture_data((dir / "y.txt").string(), y);
  CHECK(load_mixture_data((dir / "y.txt").string()) == y);

  std::vector<int> counts{1, 0, 2, 3};
  save_cox_counts((dir / "c.txt").string(), 2, counts);
  auto [g, back] = load_cox_counts((dir / "c.txt").string());
  CHECK(g == 2);
  CHECK(back == counts);
  fs::remove_all(dir);
}
