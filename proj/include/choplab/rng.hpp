#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace choplab {

// Counter-based deterministic generator built on SplitMix64
// (Steele, Lea, Flood 2014). State advances by the golden-ratio
// increment 0x9E3779B97F4A7C15; output is the finalizer with
// constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (one value per call, no caching,
  // so the stream position is independent of call parity).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
};

// Derives a sub-seed from a base seed and a label such as
// "taskgen/type2/idx17". FNV-1a over the label, mixed with the base
// seed through one SplitMix64 round.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

}  // namespace choplab
