#include "timecast/random.hpp"

#include <cmath>

namespace timecast {

float RandomSource::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller; u1 in (0,1] so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  cached_ = static_cast<float>(r * std::sin(theta));
  has_cached_ = true;
  return static_cast<float>(r * std::cos(theta));
}

void RandomSource::fill_normal(std::span<float> out) {
  for (float& v : out) v = normal();
}

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d) {
  std::uint64_t state = a;
  std::uint64_t out = splitmix64(state);
  state ^= b + 0x9e3779b97f4a7c15ULL;
  out ^= splitmix64(state);
  state ^= c + 0xc2b2ae3d27d4eb4fULL;
  out ^= splitmix64(state);
  state ^= d + 0x165667b19e3779f9ULL;
  out ^= splitmix64(state);
  return out;
}

}  // namespace timecast
