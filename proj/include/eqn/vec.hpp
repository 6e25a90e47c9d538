#pragma once

#include <span>
#include <vector>

#include "eqn/kernels.hpp"

namespace eqn {

using Vec = std::vector<double>;
using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

inline Vec zeros(std::size_t n) { return Vec(n, 0.0); }

inline void fill_zero(MutSpan x) {
  for (double& v : x) v = 0.0;
}

inline void copy_into(ConstSpan src, MutSpan dst) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
}

}  // namespace eqn
