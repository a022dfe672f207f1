#include "ndtfuse/sim/rng.hpp"

#include <cmath>

#include "ndtfuse/geometry.hpp"

namespace ndtfuse::sim {

namespace {

inline std::uint64_t splitmix(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

StreamRng::StreamRng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  const std::uint64_t a = splitmix(s);
  s = stream ^ 0xA3EC647659359ACDull;
  const std::uint64_t b = splitmix(s);
  state_ = a ^ (b * 0xFF51AFD7ED558CCDull);
}

std::uint64_t StreamRng::next_u64() { return splitmix(state_); }

double StreamRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double StreamRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double StreamRng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller; u1 kept away from zero.
  const double u1 = std::max(uniform(), 0x1.0p-53);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  cached_ = r * std::sin(2.0 * kPi * u2);
  has_cached_ = true;
  return r * std::cos(2.0 * kPi * u2);
}

Vec3 StreamRng::normal3(double sigma) {
  if (sigma == 0.0) return Vec3::Zero();
  return Vec3(sigma * normal(), sigma * normal(), sigma * normal());
}

}  // namespace ndtfuse::sim
