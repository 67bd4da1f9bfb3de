#pragma once

// Constant-gain suboptimal controllers with a closed-loop stability
// requirement, deterministic and over scenario sets:
//
//   S0    alternating minimization of the closed-loop cost plus a penalty tying
//         K to a Lyapunov LMI certificate (P, C, D)
//   S1    Nelder-Mead over a Riccati factor L of the finite-horizon cost
//   S2    Nelder-Mead over L of the two-term telescoped cost
//   Sinf  infinite-horizon gain from the stabilizing ARE solution
//   classic  the time-varying optimum, closed with its last gain K_{T-1}

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slqr/lmi.hpp"
#include "slqr/lqr.hpp"
#include "slqr/minimax.hpp"
#include "slqr/optimize.hpp"
#include "slqr/scenario.hpp"

namespace slqr {

enum class Method { s0, s1, s2, sinf, classic };

[[nodiscard]] std::string to_string(Method m);
// Accepts s0, s1, s2, sinf, classic. Throws ValidationError otherwise.
[[nodiscard]] Method method_from_string(const std::string& name);

struct S0Config {
  double xi = 1e-5;
  double mu = 0.01;
  int max_outer = 1000;
  double gain_tol = 1e-8;  // ||K(i) - K(i-1)||_F <= gain_tol * (1 + ||K(i-1)||_F)
  double init_scale = 0.1;
  LbfgsOptions lbfgs;
  MinimaxOptions minimax;  // gain step over several plants
  BarrierOptions barrier;

  void validate() const;
};

struct NmConfig {
  NelderMeadOptions nm;
  double init_scale = 0.1;
};

struct StabilizedSolution {
  Method method = Method::classic;
  Mat K;
  double rho_closed = 0.0;
  double cost = 0.0;       // finite-horizon cost of the constant-gain closed loop
  double objective = 0.0;  // the method's own objective at the returned decision
  int iterations = 0;
  double wall_ms = 0.0;
  bool converged = false;
  std::optional<LmiCertificate> certificate;  // S0
  std::optional<Mat> are_value;               // Sinf
  std::optional<Mat> L;                       // S1, S2
  std::vector<double> objective_history;      // S0, one entry per (C1) and (C2)
};

// Recomputes rho_closed and cost from K.
void refresh_metrics(StabilizedSolution& sol, const LtiSystem& sys, const CostSpec& cost);

struct ValueGradient {
  double value = 0.0;
  Mat gradient;  // m x n
};

// Closed-loop finite-horizon cost v(K) and its gradient via the costate
// recursion lambda_T = -2 S x_T, lambda_t = -2 (Q + K'RK) x_t + (F+GK)' lambda_{t+1}.
[[nodiscard]] ValueGradient closed_loop_value_gradient(const Mat& F, const Mat& G, const Vec& x0,
                                                       const CostSpec& cost, const Mat& K);

// v(K) + ||K C - D||_F^2 / (2 mu) with gradient
// sum_t [2 R K x_t x_t' - G' lambda_{t+1} x_t'] + (K C C' - D C') / mu.
[[nodiscard]] ValueGradient c1_value_and_gradient(const Mat& K, const Mat& C, const Mat& D,
                                                  const LtiSystem& sys, const CostSpec& cost,
                                                  double mu);

[[nodiscard]] StabilizedSolution s0_solve(const LtiSystem& sys, const CostSpec& cost,
                                          const S0Config& cfg, std::uint64_t seed);

// PBH test: rank [F - sigma I; Q^{1/2}] = n for every eigenvalue with |sigma| >= 1.
[[nodiscard]] bool is_detectable(const Mat& F, const Mat& Q);

struct AreSolution {
  Mat M;
  Mat K;
  double residual = 0.0;
  int iterations = 0;
};

[[nodiscard]] double are_residual(const Mat& M, const Mat& F, const Mat& G, const Mat& Q,
                                  const Mat& R);
// Stabilizing ARE solution, or nullopt when (F, Q^{1/2}) is not detectable.
// Throws ConvergenceError if the iteration fails on a detectable pair.
[[nodiscard]] std::optional<AreSolution> solve_are(const Mat& F, const Mat& G, const Mat& Q,
                                                   const Mat& R);
// nullopt means not detectable.
[[nodiscard]] std::optional<StabilizedSolution> sinf_solve(const LtiSystem& sys,
                                                           const CostSpec& cost);

[[nodiscard]] Mat feedback_from_L(const Mat& L, const Mat& F, const Mat& G, const Mat& R);
[[nodiscard]] double s1_objective(const Mat& L, const LtiSystem& sys, const CostSpec& cost);
[[nodiscard]] double s2_objective(const Mat& L, const LtiSystem& sys, const CostSpec& cost);
[[nodiscard]] StabilizedSolution s1_solve(const LtiSystem& sys, const CostSpec& cost,
                                          const NmConfig& cfg, std::uint64_t seed);
[[nodiscard]] StabilizedSolution s2_solve(const LtiSystem& sys, const CostSpec& cost,
                                          const NmConfig& cfg, std::uint64_t seed);

[[nodiscard]] StabilizedSolution classic_solve(const LtiSystem& sys, const CostSpec& cost);

struct RobustConfig {
  S0Config s0;
  NmConfig nm;
  std::uint64_t seed = 0;
  Execution execution = Execution::serial;
};

struct RobustSolution {
  StabilizedSolution solution;  // K is the gain for the active scenario
  int active_scenario = -1;
  // Scenarios that could have influenced the run: attained the max at an
  // evaluation, bound a gain subproblem or entered an LMI working set.
  std::optional<std::vector<int>> witnesses;
  std::vector<int> retained;  // Sinf: detectable scenarios
  // flattened decision variable used for support detection
  Vec decision;

  // Gain applied to a plant F: L-based methods rebuild K from F.
  [[nodiscard]] Mat gain_for(const Mat& F, const Mat& G, const Mat& R) const;
};

// The objective is max_i J_i at the returned decision; rho_closed and cost in
// the solution are the maxima over the training scenarios.
[[nodiscard]] RobustSolution robust_solve(Method method, const ScenarioSet& scenarios,
                                          const CostSpec& cost, const RobustConfig& cfg);

}  // namespace slqr
