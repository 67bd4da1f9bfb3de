#pragma once

// Seeded random streams. The engine is std::mt19937_64, whose output sequence
// is fixed by the C++ standard; the uniform and normal transforms are written
// out here because the standard distributions are implementation-defined.
// Independent streams are derived from (seed, stream index) with splitmix64.

#include <cstdint>
#include <random>

#include "slqr/matrix_kernel.hpp"

namespace slqr {

std::uint64_t splitmix64(std::uint64_t x);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  // Stream for sub-task `index`, independent of how much of this stream was used.
  [[nodiscard]] Rng split(std::uint64_t index) const;

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via the Box-Muller transform (no cached second value).
  double normal();

  Mat normal_matrix(Index rows, Index cols, double scale = 1.0);
  Mat uniform_matrix(Index rows, Index cols, double lo, double hi);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace slqr
