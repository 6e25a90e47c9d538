#pragma once

#include <cstdint>
#include <span>

// Counter-based random streams.  Each walker owns an independent stream
// identified by (seed, stream id); the stream position is a single 64-bit
// counter, so checkpointing and exact resume need only (key, counter).
// The generator is Philox4x32-10 (Salmon et al.), which is deterministic
// across platforms and thread schedules.

namespace eqn {

// One draw source.  Virtual so tests can inject degenerate noise.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual double normal() = 0;          // N(0,1)
  virtual double uniform() = 0;         // U(0,1), never exactly 0
  virtual void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal();
  }
};

class PhiloxRng final : public RandomSource {
 public:
  PhiloxRng() : PhiloxRng(0, 0) {}
  PhiloxRng(std::uint64_t seed, std::uint64_t stream);

  // Restore a stream from checkpointed (key, counter).
  static PhiloxRng from_key(std::uint64_t key, std::uint64_t counter) {
    PhiloxRng r;
    r.key_ = key;
    r.counter_ = counter;
    return r;
  }

  double normal() override;
  double uniform() override;

  // Stream position for checkpointing.
  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t c) noexcept { counter_ = c; }
  std::uint64_t key() const noexcept { return key_; }

  // Raw 128-bit block at the current counter (advances the counter).
  void next_block(std::uint32_t out[4]);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Deterministic stream-key derivation (splitmix-style mix of seed and id).
std::uint64_t derive_stream_key(std::uint64_t seed, std::uint64_t stream);

// Test helper: always returns 0 for normals, 0.5 for uniforms.
class ZeroNoise final : public RandomSource {
 public:
  double normal() override { return 0.0; }
  double uniform() override { return 0.5; }
};

}  // namespace eqn
