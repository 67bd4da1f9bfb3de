#pragma once

// Sequential quadratic programming for min_x max_i f_i(x) with smooth terms.
// Each step solves min_d max_i (f_i + g_i'd) + d'Bd/2 with a damped-BFGS model
// B of the Lagrangian and backtracks on the max.

#include <functional>
#include <vector>

#include "slqr/matrix_kernel.hpp"

namespace slqr {

// Fills values (count) and gradients (dim x count, one column per term).
using MinimaxTerms = std::function<void(const Vec& x, Vec& values, Mat& grads)>;

struct MinimaxOptions {
  int max_iterations = 2000;
  // Stop when the predicted decrease is below tol * max(1, |f|).
  double tol = 1e-14;
  // Stop once the step is below step_tol * (1 + |x|) as well.
  double step_tol = 1e-12;
  double armijo_c = 1e-4;
  int max_backtracks = 50;
  // Model from central differences of the Lagrangian gradient (2*dim extra
  // evaluations per iteration) instead of damped BFGS.
  bool newton = false;
};

struct MinimaxResult {
  Vec x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  Vec multipliers;  // from the last subproblem
  // Terms that were binding in some subproblem or attained the max at an
  // evaluated point. Removing any other term replays the same iterates.
  std::vector<int> influencing;
  Mat hessian;  // final model, reusable as a warm start
};

struct MinimaxStep {
  Vec d;
  Vec multipliers;  // on the simplex; nonzero only for binding terms
  double model = 0.0;  // max_i (v_i + g_i'd) + d'Bd/2
};

// Exact active-set solve of the subproblem through its dual over the simplex.
// values (N), grads (dim x N), B symmetric positive definite.
[[nodiscard]] MinimaxStep minimax_qp(const Vec& values, const Mat& grads, const Mat& B);

[[nodiscard]] MinimaxResult minimax_sqp(int count, const MinimaxTerms& terms, const Vec& x0,
                                        const MinimaxOptions& opts = {},
                                        const Mat* hessian0 = nullptr);

}  // namespace slqr
