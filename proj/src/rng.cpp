#include "eqn/rng.hpp"

#include <cmath>

namespace eqn {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::uint32_t ctr[4], const std::uint32_t key[2]) {
  const std::uint64_t p0 = std::uint64_t(kPhiloxM0) * ctr[0];
  const std::uint64_t p1 = std::uint64_t(kPhiloxM1) * ctr[2];
  const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
  const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
  ctr[0] = hi1 ^ ctr[1] ^ key[0];
  ctr[1] = lo1;
  ctr[2] = hi0 ^ ctr[3] ^ key[1];
  ctr[3] = lo0;
}

inline void philox4x32_10(std::uint64_t key64, std::uint64_t counter,
                          std::uint32_t out[4]) {
  std::uint32_t key[2] = {std::uint32_t(key64), std::uint32_t(key64 >> 32)};
  out[0] = std::uint32_t(counter);
  out[1] = std::uint32_t(counter >> 32);
  out[2] = 0;
  out[3] = 0;
  for (int r = 0; r < 10; ++r) {
    philox_round(out, key);
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
}

// 53-bit uniform in (0,1] from two 32-bit words, then flipped to [0,1);
// the +1 offset keeps log() finite in Box-Muller.
inline double u01(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((std::uint64_t(hi) << 32) | lo) >> 11;  // 53 bits
  return (double(bits) + 1.0) * 0x1.0p-53;                            // (0,1]
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_stream_key(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9E3779B97F4A7C15ull + 1));
}

PhiloxRng::PhiloxRng(std::uint64_t seed, std::uint64_t stream)
    : key_(derive_stream_key(seed, stream)) {}

void PhiloxRng::next_block(std::uint32_t out[4]) {
  philox4x32_10(key_, counter_++, out);
}

double PhiloxRng::uniform() {
  std::uint32_t b[4];
  next_block(b);
  return u01(b[0], b[1]);
}

double PhiloxRng::normal() {
  // One block per draw: two uniforms feed a single Box-Muller cosine branch.
  // Wastes half the pair but keeps the stream position a pure draw count.
  std::uint32_t b[4];
  next_block(b);
  const double u1 = u01(b[0], b[1]);
  const double u2 = u01(b[2], b[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace eqn
