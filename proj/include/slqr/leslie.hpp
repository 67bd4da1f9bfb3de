#pragma once

// Leslie age-structured population models: fecundities on the first row,
// survival rates on the subdiagonal.

#include <vector>

#include "slqr/rng.hpp"
#include "slqr/scenario.hpp"

namespace slqr {

struct LeslieParams {
  std::vector<double> fecundity;  // nu_1 .. nu_n, >= 0
  std::vector<double> survival;   // kappa_1 .. kappa_{n-1}

  [[nodiscard]] Index n() const { return static_cast<Index>(fecundity.size()); }
  // Nominal models need survival rates in (0,1); perturbed ones only need the shape.
  void validate(bool nominal = true) const;
};

struct Range {
  double lo;
  double hi;
};

// Additive uniform perturbation of each survival rate.
struct UncertaintySpec {
  std::vector<double> lower;
  std::vector<double> upper;

  static UncertaintySpec uniform(Index count, double lo, double hi);
  void validate(Index survival_count) const;
};

[[nodiscard]] Mat leslie_matrix(const LeslieParams& params);

[[nodiscard]] LeslieParams sample_random_leslie(Rng& rng, Index n, Range fecundity, Range survival);

// N perturbed models kappa_i + delta_i sharing `G` (identity when empty) and x0.
// Survival rates leaving (0,1) are kept as drawn and noted in the warnings.
[[nodiscard]] ScenarioSet sample_scenarios(const LeslieParams& nominal, const UncertaintySpec& spec,
                                           int count, Rng& rng, const Mat& G = Mat(),
                                           const Vec& x0 = Vec());

}  // namespace slqr
