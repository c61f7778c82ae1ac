#pragma once

#include <cstdint>

namespace offgrid {

// splitmix64 (Steele/Lea/Flood via Vigna's reference). The single source of
// workload randomness: tiny, portable, and fully pinned so graphs and results
// reproduce across implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  uint64_t state_;
};

// Stateless mix of one value through the splitmix64 output function.
// Handy for deriving keyed streams (guids, leaf scores).
inline uint64_t splitmix64_at(uint64_t seed, uint64_t index) {
  SplitMix64 rng(seed + index * 0x9E3779B97F4A7C15ULL);
  return rng.next();
}

}  // namespace offgrid
