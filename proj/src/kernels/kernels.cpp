#include "eqn/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace eqn::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

struct State {
  const detail::Ops* ops;
  Isa isa;
};

State initial_state() noexcept {
  bool want_avx2 = cpu_has_avx2();
  if (const char* env = std::getenv("EQN_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) want_avx2 = false;
    // "avx2" keeps the default (still requires CPU support)
  }
  if (want_avx2) return {&detail::avx2_ops(), Isa::avx2};
  return {&detail::scalar_ops(), Isa::scalar};
}

std::atomic<const detail::Ops*> g_ops{nullptr};
std::atomic<Isa> g_isa{Isa::scalar};

const detail::Ops& ops() noexcept {
  const detail::Ops* p = g_ops.load(std::memory_order_acquire);
  if (!p) {
    State s = initial_state();
    g_isa.store(s.isa, std::memory_order_relaxed);
    g_ops.store(s.ops, std::memory_order_release);
    p = s.ops;
  }
  return *p;
}

}  // namespace

bool avx2_supported() noexcept { return cpu_has_avx2(); }

Isa active_isa() noexcept {
  ops();
  return g_isa.load(std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) noexcept {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

bool select_isa(Isa isa) noexcept {
  if (isa == Isa::avx2 && !cpu_has_avx2()) return false;
  g_isa.store(isa, std::memory_order_relaxed);
  g_ops.store(isa == Isa::avx2 ? &detail::avx2_ops() : &detail::scalar_ops(),
              std::memory_order_release);
  return true;
}

void axpy(double a, std::span<const double> x, std::span<double> y) noexcept {
  ops().axpy(a, x.data(), y.data(), x.size());
}

void axpby(double a, std::span<const double> x, double b, std::span<double> y) noexcept {
  ops().axpby(a, x.data(), b, y.data(), x.size());
}

void copy_scaled(double a, std::span<const double> x, std::span<double> y) noexcept {
  ops().copy_scaled(a, x.data(), y.data(), x.size());
}

double dot(std::span<const double> x, std::span<const double> y) noexcept {
  return ops().dot(x.data(), y.data(), x.size());
}

double sumsq(std::span<const double> x) noexcept {
  return ops().sumsq(x.data(), x.size());
}

double sum(std::span<const double> x) noexcept {
  return ops().sum(x.data(), x.size());
}

void vexp(std::span<const double> x, std::span<double> out) noexcept {
  ops().vexp(x.data(), out.data(), x.size());
}

void vlog(std::span<const double> x, std::span<double> out) noexcept {
  ops().vlog(x.data(), out.data(), x.size());
}

}  // namespace eqn::kernels
