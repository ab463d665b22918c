#pragma once

#include <cstdint>

namespace nlgd {

// Deterministic counter-based random stream built on the SplitMix64 mixer.
// The same seed produces the same sequence on every platform; standard
// library engines are deliberately not used so stored runs replay exactly.
//
// Substreams for parallel work come from split(), which derives a fresh,
// statistically independent seed from (seed, index).
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53 bits of mantissa.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the pair's second value is cached.
  double next_gaussian();

  // Derived stream for (seed, index); does not advance this stream.
  RngStream split(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace nlgd
