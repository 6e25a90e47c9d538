#include "eqn/kernels.hpp"

#include <cmath>

namespace eqn::kernels::detail {

namespace {

void axpy_s(double a, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby_s(double a, const double* x, double b, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

void copy_scaled_s(double a, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

double dot_s(const double* x, const double* y, std::size_t n) noexcept {
  // Four partial sums; same association order as the AVX2 variant's tail
  // handling keeps results close without being bit-identical.
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sumsq_s(const double* x, std::size_t n) noexcept { return dot_s(x, x, n); }

void vexp_s(const double* x, double* out, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void vlog_s(const double* x, double* out, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

double sum_s(const double* x, std::size_t n) noexcept {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i];
    s1 += x[i + 1];
    s2 += x[i + 2];
    s3 += x[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += x[i];
  return s;
}

}  // namespace

const Ops& scalar_ops() noexcept {
  static const Ops ops{axpy_s, vexp_s, vlog_s, axpby_s, copy_scaled_s, dot_s, sumsq_s, sum_s};
  return ops;
}

}  // namespace eqn::kernels::detail
