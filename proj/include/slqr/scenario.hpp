#pragma once

// Scenario-approach tools: sample-size and a-posteriori violation bounds, the
// convex min-max LQR over sampled plants, and the greedy support subsample.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slqr/lqr.hpp"
#include "slqr/parallel.hpp"

namespace slqr {

struct ScenarioProvenance {
  std::uint64_t seed = 0;
  std::vector<double> delta_lower;
  std::vector<double> delta_upper;
  std::vector<std::string> warnings;
};

struct ScenarioSet {
  std::vector<Mat> F;  // one state matrix per scenario
  Mat G;
  Vec x0;
  ScenarioProvenance provenance;

  [[nodiscard]] int size() const { return static_cast<int>(F.size()); }
  [[nodiscard]] LtiSystem system(int i) const { return {F[static_cast<std::size_t>(i)], G, x0}; }
  [[nodiscard]] ScenarioSet subset(const std::vector<int>& indices) const;
  void validate() const;
};

struct RobustnessBudget {
  double epsilon;
  double beta;
  int d;

  void validate() const;
};

// Smallest N with N >= (2/eps) (ln(1/beta) + d - 1).
[[nodiscard]] long long required_scenarios(const RobustnessBudget& budget);

// 1 - (beta / (N * binom(N, k)))^(1/(N-k)), and 1 when k == N.
[[nodiscard]] double epsilon_posterior(int k, int n, double beta);

struct ScenarioLqrOptions {
  double kkt_tol = 1e-7;
  double active_tol = 1e-6;  // relative slack below which a constraint counts as binding
  int max_newton = 100;
};

struct ScenarioLqrSolution {
  Vec stacked;           // u_0 .. u_{T-1} stacked
  InputSequence inputs;  // filled when the scenario set (and so m) is known
  double alpha = 0.0;
  std::vector<int> active;     // binding scenario indices
  Vec multipliers;             // lambda_i >= 0, sum 1
  double stationarity = 0.0;   // || sum_i lambda_i grad q_i(u) ||
  double complementarity = 0.0;
  // per-scenario cost at the returned inputs
  std::vector<double> costs;
};

// min_{u, alpha} alpha  s.t.  J_i(u) <= alpha for every scenario, J_i the full
// finite-horizon cost of scenario i.
[[nodiscard]] ScenarioLqrSolution solve_scenario_unconstrained(
    const ScenarioSet& scenarios, const CostSpec& cost, const ScenarioLqrOptions& opts = {});
// Same on prebuilt condensed quadratics.
[[nodiscard]] ScenarioLqrSolution solve_scenario_unconstrained(
    const std::vector<P1Problem>& quadratics, const ScenarioLqrOptions& opts = {});

struct SubsampleSolve {
  Vec decision;
  // Scenarios that could have affected the run. When present, dropping any
  // other scenario provably leaves the result unchanged and no re-solve is done.
  std::optional<std::vector<int>> influencing;
};
using SubsampleSolver = std::function<SubsampleSolve(const std::vector<int>& indices)>;

struct SupportSubsample {
  std::vector<int> indices;
  int cardinality = 0;
  double epsilon = 1.0;
  Vec decision;  // full-sample solution
  int solves = 0;
};

struct SupportOptions {
  double unchanged_tol = 1e-6;
  Execution execution = Execution::parallel;
};

// Leave-one-out support detection followed by a confirmation pass that
// re-solves on the candidate support and prunes it to an irreducible set.
// `epsilon_n` is the N used for the posterior bound (defaults to `n`).
[[nodiscard]] SupportSubsample greedy_support_subsample(int n, const SubsampleSolver& solver,
                                                        double beta,
                                                        const SupportOptions& opts = {},
                                                        std::optional<int> epsilon_n = {});

[[nodiscard]] bool solutions_unchanged(const Vec& a, const Vec& reference, double tol);

// Fraction of entries for which violates(i) is true.
[[nodiscard]] double validate_violation(int count, const std::function<bool(int)>& violates);
// Fraction of fresh plants with rho(F_i + G K_i) >= 1, K_i = gain_for(F_i).
[[nodiscard]] double stability_violation_rate(const std::vector<Mat>& fresh, const Mat& G,
                                              const std::function<Mat(const Mat&)>& gain_for);

}  // namespace slqr
