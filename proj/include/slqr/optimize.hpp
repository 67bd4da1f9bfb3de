#pragma once

// Unconstrained minimizers used by the stabilizing-gain solvers: limited-memory
// BFGS for the smooth gain subproblem and Nelder-Mead for the derivative-free
// Riccati-factor searches.

#include <functional>

#include "slqr/matrix_kernel.hpp"

namespace slqr {

// Returns f(x) and writes the gradient into grad (already sized like x).
using ValueAndGradient = std::function<double(const Vec& x, Vec& grad)>;
using Objective = std::function<double(const Vec& x)>;

struct LbfgsOptions {
  int memory = 10;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
  int max_iterations = 500;
  // Stop when ||g||_inf <= gradient_tol * max(1, |f|).
  double gradient_tol = 1e-10;
  // Stop when the decrease over one iteration is below value_tol * max(1, |f|).
  double value_tol = 1e-15;
};

struct LbfgsResult {
  Vec x;
  double value = 0.0;
  int iterations = 0;
  int restarts = 0;
  bool converged = false;
};

// Monotone: every accepted step satisfies the Armijo condition, so the
// returned value never exceeds f(x0). A failed line search clears the memory
// and retries along a damped steepest-descent direction once before giving up.
[[nodiscard]] LbfgsResult lbfgs_minimize(const ValueAndGradient& fg, const Vec& x0,
                                         const LbfgsOptions& opts = {});

struct NelderMeadOptions {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  double initial_step = 0.1;
  // 0 means 2000 * dim.
  int max_evaluations = 0;
  double value_tol = 1e-10;  // relative spread of vertex values
  double point_tol = 1e-8;   // max-norm spread of vertices
  int restarts = 1;
};

struct NelderMeadResult {
  Vec x;
  double value = 0.0;
  int evaluations = 0;
  int restarts_used = 0;
  bool converged = false;
};

// Non-finite objective values are treated as +infinity.
[[nodiscard]] NelderMeadResult nelder_mead_minimize(const Objective& f, const Vec& x0,
                                                    const NelderMeadOptions& opts = {});

}  // namespace slqr
