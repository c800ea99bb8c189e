#pragma once

#include <cstdint>
#include <random>

namespace gridnif {

/// Seeded 64-bit Mersenne Twister with a portable uniform mapping.
///
/// std::uniform_real_distribution is implementation-defined, so draws go
/// through the top 53 bits directly to stay identical across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  std::uint64_t next() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

}  // namespace gridnif
