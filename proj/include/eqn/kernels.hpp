#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Vector arithmetic kernels used by the inner loops (low-rank operator
// application, integrator updates, autocovariance sums).  Scalar reference
// implementations are always available; on x86-64 an AVX2/FMA variant is
// selected at runtime when the CPU supports it.  The two variants are
// equivalence-tested against each other.

namespace eqn::kernels {

// y[i] += a * x[i]
void axpy(double a, std::span<const double> x, std::span<double> y) noexcept;

// y[i] = a * x[i] + b * y[i]
void axpby(double a, std::span<const double> x, double b, std::span<double> y) noexcept;

// y[i] = a * x[i]
void copy_scaled(double a, std::span<const double> x, std::span<double> y) noexcept;

double dot(std::span<const double> x, std::span<const double> y) noexcept;

double sumsq(std::span<const double> x) noexcept;

double sum(std::span<const double> x) noexcept;

// out[i] = exp(x[i]); vectorized polynomial evaluation on the AVX2 path,
// accurate to a few ulp over the full double range.
void vexp(std::span<const double> x, std::span<double> out) noexcept;

// out[i] = log(x[i]); x[i] must be positive and finite.
void vlog(std::span<const double> x, std::span<double> out) noexcept;

enum class Isa { scalar, avx2 };

// Active instruction set (picked once at startup, overridable for tests
// and via the EQN_KERNELS environment variable: "scalar" or "avx2").
Isa active_isa() noexcept;
std::string_view isa_name(Isa isa) noexcept;

// Force a specific implementation; returns false if unsupported on this CPU.
bool select_isa(Isa isa) noexcept;

// True if the CPU supports the AVX2 path.
bool avx2_supported() noexcept;

namespace detail {
struct Ops {
  void (*axpy)(double, const double*, double*, std::size_t) noexcept;
  void (*vexp)(const double*, double*, std::size_t) noexcept;
  void (*vlog)(const double*, double*, std::size_t) noexcept;
  void (*axpby)(double, const double*, double, double*, std::size_t) noexcept;
  void (*copy_scaled)(double, const double*, double*, std::size_t) noexcept;
  double (*dot)(const double*, const double*, std::size_t) noexcept;
  double (*sumsq)(const double*, std::size_t) noexcept;
  double (*sum)(const double*, std::size_t) noexcept;
};
const Ops& scalar_ops() noexcept;
const Ops& avx2_ops() noexcept;  // valid only if avx2_supported()
}  // namespace detail

}  // namespace eqn::kernels
