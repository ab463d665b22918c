#include "nlgd/rng.hpp"

#include <cmath>
#include <numbers>

namespace nlgd {

double RngStream::next_gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // u1 is shifted away from zero so log() stays finite.
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_ = r * std::sin(angle);
  has_cached_ = true;
  return r * std::cos(angle);
}

RngStream RngStream::split(std::uint64_t index) const {
  // Mix the child index through the same finalizer before combining, so
  // neighbouring indices land far apart in seed space.
  std::uint64_t z = index + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return RngStream(seed_ ^ z);
}

}  // namespace nlgd
