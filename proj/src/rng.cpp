#include "slqr/rng.hpp"

#include <cmath>
#include <numbers>

namespace slqr {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(splitmix64(splitmix64(seed_) ^ splitmix64(index + 0x5851F42D4C957F2DULL)));
}

double Rng::normal() {
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Mat Rng::normal_matrix(Index rows, Index cols, double scale) {
  Mat out(rows, cols);
  // Row-major draw order so the stream maps to entries the way configs list them.
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = scale * normal();
  }
  return out;
}

Mat Rng::uniform_matrix(Index rows, Index cols, double lo, double hi) {
  Mat out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = uniform(lo, hi);
  }
  return out;
}

}  // namespace slqr
