#pragma once

#include <cstdint>
#include <random>

namespace nlpflow {

/// mt19937_64 with a portable uniform mapping: the top 53 bits of each draw
/// become a double in [0, 1). std::uniform_real_distribution is avoided
/// because its output differs between standard libraries, and seeded runs
/// must replay identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nlpflow
