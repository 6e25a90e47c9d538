#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eqn/rng.hpp"

using namespace eqn;

TEST_CASE("streams are deterministic and counter-addressable") {
  PhiloxRng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

  // Jumping the counter reproduces draws without replaying the stream.
  PhiloxRng c(42, 7);
  c.set_counter(50);
  PhiloxRng d(42, 7);
  for (int i = 0; i < 50; ++i) d.normal();
  CHECK(c.normal() == d.normal());
}

TEST_CASE("distinct streams differ") {
  PhiloxRng a(42, 0), b(42, 1), c(43, 0);
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) {
    const double x = a.normal();
    if (x != b.normal() || x != c.normal()) all_equal = false;
  }
  CHECK_FALSE(all_equal);
}

TEST_CASE("normal draws have the right first moments") {
  PhiloxRng r(7, 0);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  s /= n;
  s2 /= n;
  s4 /= n;
  CHECK(std::abs(s) < 4.0 / std::sqrt(double(n)));           // mean 0
  CHECK(std::abs(s2 - 1.0) < 4.0 * std::sqrt(2.0 / n));      // var 1
  CHECK(std::abs(s4 - 3.0) < 4.0 * std::sqrt(96.0 / n));     // kurtosis 3
}

TEST_CASE("uniforms live in (0,1)") {
  PhiloxRng r(3, 3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
  }
}
