#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace timecast {

// Deterministic random source. Uniform and normal draws are implemented on
// top of the raw mt19937_64 stream (not std::distribution, whose output is
// implementation-defined), so a seed reproduces the same values everywhere.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  float uniform_range(float lo, float hi) {
    return lo + static_cast<float>(uniform()) * (hi - lo);
  }

  // inclusive on both ends
  int uniform_int(int lo, int hi) {
    if (hi <= lo) return lo;
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  float normal();
  void fill_normal(std::span<float> out);

 private:
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  float cached_ = 0.f;
};

// splitmix64 step; used to derive independent per-task seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                       std::uint64_t d = 0);

}  // namespace timecast
