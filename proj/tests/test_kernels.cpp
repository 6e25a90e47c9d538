#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "eqn/kernels.hpp"

using namespace eqn;

namespace {

std::vector<double> random_vec(std::mt19937_64& g, std::size_t n) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree on random inputs") {
  if (!kernels::avx2_supported()) return;  // nothing to compare on this CPU
  std::mt19937_64 gen(12345);
  const auto& s = kernels::detail::scalar_ops();
  const auto& v = kernels::detail::avx2_ops();

  // Sizes around the vector width to cover remainders.
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 17u, 64u, 257u, 1000u}) {
    auto x = random_vec(gen, n);
    auto y = random_vec(gen, n);
    const double a = 1.7, b = -0.3;

    double scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(x[i] * y[i]);
    CHECK(std::abs(s.dot(x.data(), y.data(), n) - v.dot(x.data(), y.data(), n)) <=
          1e-14 * scale);
    CHECK(std::abs(s.sum(x.data(), n) - v.sum(x.data(), n)) <= 1e-13 * (1.0 + scale));
    CHECK(std::abs(s.sumsq(x.data(), n) - v.sumsq(x.data(), n)) <= 1e-13 * scale);

    auto y1 = y, y2 = y;
    s.axpy(a, x.data(), y1.data(), n);
    v.axpy(a, x.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));

    y1 = y;
    y2 = y;
    s.axpby(a, x.data(), b, y1.data(), n);
    v.axpby(a, x.data(), b, y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));

    std::vector<double> o1(n), o2(n);
    s.copy_scaled(a, x.data(), o1.data(), n);
    v.copy_scaled(a, x.data(), o2.data(), n);
    CHECK(o1 == o2);  // pure products, bitwise equal
  }
}

TEST_CASE("isa selection is honored") {
  const auto original = kernels::active_isa();
  CHECK(kernels::select_isa(kernels::Isa::scalar));
  CHECK(kernels::active_isa() == kernels::Isa::scalar);
  if (kernels::avx2_supported()) {
    CHECK(kernels::select_isa(kernels::Isa::avx2));
    CHECK(kernels::active_isa() == kernels::Isa::avx2);
  }
  kernels::select_isa(original);
}

TEST_CASE("kernel front-end matches active ops") {
  std::vector<double> x{1, 2, 3, 4, 5}, y{5, 4, 3, 2, 1};
  CHECK(kernels::dot(x, y) == doctest::Approx(35.0));
  kernels::axpy(2.0, x, y);
  CHECK(y[0] == doctest::Approx(7.0));
  CHECK(y[4] == doctest::Approx(11.0));
  CHECK(kernels::sum(x) == doctest::Approx(15.0));
  CHECK(kernels::sumsq(x) == doctest::Approx(55.0));
}
