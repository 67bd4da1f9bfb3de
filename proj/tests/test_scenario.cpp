#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "slqr/errors.hpp"
#include "slqr/scenario.hpp"
#include "test_util.hpp"

namespace {

using namespace slqr;

// Direct product form of the posterior bound, usable for small N.
double epsilon_direct(int k, int n, double beta) {
  if (k == n) return 1.0;
  double binom = 1.0;
  for (int i = 1; i <= k; ++i) binom = binom * (n - k + i) / i;
  return 1.0 - std::pow(beta / (n * binom), 1.0 / (n - k));
}

TEST(RequiredScenarios, Examples) {
  EXPECT_EQ(required_scenarios({0.1, 0.01, 2}), 113);
  EXPECT_EQ(required_scenarios({0.2, 0.01, 2}), static_cast<long long>(std::ceil(10.0 * (std::log(100.0) + 1.0))));
  EXPECT_EQ(required_scenarios({0.05, 0.1, 1}), static_cast<long long>(std::ceil(40.0 * std::log(10.0))));
  EXPECT_THROW((void)required_scenarios({0.0, 0.1, 1}), ValidationError);
  EXPECT_THROW((void)required_scenarios({0.1, 1.0, 1}), ValidationError);
  EXPECT_THROW((void)required_scenarios({0.1, 0.1, 0}), ValidationError);
}

TEST(RequiredScenarios, Monotone) {
  long long prev = required_scenarios({0.01, 0.05, 3});
  for (double e = 0.02; e < 0.9; e += 0.01) {
    const long long cur = required_scenarios({e, 0.05, 3});
    EXPECT_LE(cur, prev);
    prev = cur;
  }
  EXPECT_LE(required_scenarios({0.1, 0.2, 3}), required_scenarios({0.1, 0.05, 3}));
  EXPECT_GE(required_scenarios({0.1, 0.05, 9}), required_scenarios({0.1, 0.05, 3}));
}

TEST(EpsilonPosterior, Examples) {
  EXPECT_NEAR(epsilon_posterior(1, 50, 0.05), 0.1981, 1e-4);
  EXPECT_NEAR(epsilon_posterior(0, 50, 0.05), 1.0 - std::pow(0.001, 1.0 / 50.0), 1e-14);
  EXPECT_NEAR(epsilon_posterior(0, 50, 0.05), 0.1290, 1e-4);
  EXPECT_EQ(epsilon_posterior(50, 50, 0.05), 1.0);
  for (int k = 0; k < 50; k += 7) EXPECT_NEAR(epsilon_posterior(k, 50, 0.05), epsilon_direct(k, 50, 0.05), 1e-12);
  EXPECT_THROW((void)epsilon_posterior(51, 50, 0.05), ValidationError);
  EXPECT_THROW((void)epsilon_posterior(-1, 50, 0.05), ValidationError);
}

TEST(EpsilonPosterior, MonotoneAndLargeN) {
  double prev = 0.0;
  for (int k = 0; k <= 10000; k += 250) {
    const double e = epsilon_posterior(k, 10000, 1e-6);
    ASSERT_TRUE(std::isfinite(e));
    EXPECT_GE(e, prev);
    prev = e;
  }
  EXPECT_EQ(epsilon_posterior(10000, 10000, 1e-6), 1.0);
}

ScenarioSet scalar_pair() {
  ScenarioSet s;
  s.F = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 2.0)};
  s.G = Mat::Ones(1, 1);
  s.x0 = Vec::Ones(1);
  return s;
}

CostSpec unit_cost(int horizon) {
  return {Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1), horizon};
}

TEST(ScenarioLqr, ScalarPairMatchesGrid) {
  const auto sol = solve_scenario_unconstrained(scalar_pair(), unit_cost(1));
  double best = 1e300, best_u = 0.0;
  for (double u = -3.0; u <= 1.0; u += 1e-5) {
    const double v = 1.0 + std::max((1 + u) * (1 + u) + u * u, (2 + u) * (2 + u) + u * u);
    if (v < best) {
      best = v;
      best_u = u;
    }
  }
  EXPECT_NEAR(sol.stacked(0), best_u, 2e-5);
  EXPECT_NEAR(sol.alpha, best, 1e-8);
  EXPECT_EQ(sol.active, std::vector<int>{1});
  EXPECT_NEAR(sol.multipliers(1), 1.0, 1e-9);
  EXPECT_LE(sol.stationarity, 1e-7);
  EXPECT_LE(sol.complementarity, 1e-7);
}

TEST(ScenarioLqr, SingleScenarioIsP1) {
  Rng rng(1);
  const auto p = slqr::testing::random_problem(rng, 3, 2, 4);
  ScenarioSet s;
  s.F = {p.sys.F};
  s.G = p.sys.G;
  s.x0 = p.sys.x0;
  const auto sol = solve_scenario_unconstrained(s, p.cost);
  EXPECT_TRUE(sol.stacked.isApprox(solve_p1(p.sys, p.cost).stacked(), 1e-8));
  EXPECT_NEAR(sol.alpha, optimal_cost(p.sys, p.cost), 1e-8 * (1.0 + sol.alpha));
  EXPECT_EQ(sol.active.size(), 1u);
  s.F.assign(5, p.sys.F);
  const auto many = solve_scenario_unconstrained(s, p.cost);
  EXPECT_TRUE(many.stacked.isApprox(sol.stacked, 1e-8));
}

TEST(ScenarioLqr, EpigraphTightAndKkt) {
  Rng rng(2);
  for (int t = 0; t < 5; ++t) {
    const auto p = slqr::testing::random_problem(rng, 3, 2, 4);
    ScenarioSet s;
    s.G = p.sys.G;
    s.x0 = p.sys.x0;
    for (int i = 0; i < 8; ++i) s.F.push_back(p.sys.F + rng.normal_matrix(3, 3, 0.3));
    const auto sol = solve_scenario_unconstrained(s, p.cost);
    double worst = 0.0;
    for (int i = 0; i < s.size(); ++i) {
      const double c = rollout(s.system(i), p.cost, sol.inputs).cost;
      EXPECT_NEAR(c, sol.costs[static_cast<std::size_t>(i)], 1e-8 * (1.0 + c));
      worst = std::max(worst, c);
    }
    EXPECT_NEAR(sol.alpha, worst, 1e-7 * (1.0 + worst));
    EXPECT_FALSE(sol.active.empty());
    EXPECT_NEAR(sol.multipliers.sum(), 1.0, 1e-9);
    EXPECT_GE(sol.multipliers.minCoeff(), 0.0);
    EXPECT_LE(sol.stationarity, 1e-7);
    EXPECT_LE(sol.complementarity, 1e-7);
    // No direction improves the max: compare with perturbed inputs.
    for (int k = 0; k < 20; ++k) {
      const Vec u = sol.stacked + rng.normal_matrix(sol.stacked.size(), 1, 1e-3).col(0);
      double w = 0.0;
      for (int i = 0; i < s.size(); ++i) {
        w = std::max(w, rollout(s.system(i), p.cost, InputSequence::from_stacked(u, 2)).cost);
      }
      EXPECT_GE(w, sol.alpha - 1e-9 * (1.0 + sol.alpha));
    }
  }
}

SubsampleSolver scenario_solver(const ScenarioSet& s, const CostSpec& cost) {
  return [s, cost](const std::vector<int>& idx) {
    const auto sol = solve_scenario_unconstrained(s.subset(idx), cost);
    SubsampleSolve out;
    out.decision = sol.stacked;
    return out;
  };
}

TEST(Support, DominatingScenario) {
  const ScenarioSet s = scalar_pair();
  const SupportSubsample sup = greedy_support_subsample(2, scenario_solver(s, unit_cost(1)), 0.05);
  EXPECT_EQ(sup.cardinality, 1);
  EXPECT_EQ(sup.indices, std::vector<int>{1});
  EXPECT_NEAR(sup.epsilon, epsilon_posterior(1, 2, 0.05), 1e-15);
}

TEST(Support, IdenticalScenarios) {
  ScenarioSet s = scalar_pair();
  s.F.assign(6, Mat::Constant(1, 1, 1.5));
  const SupportSubsample sup = greedy_support_subsample(6, scenario_solver(s, unit_cost(2)), 0.05);
  EXPECT_EQ(sup.cardinality, 1);
}

TEST(Support, IrreducibleAndReproducesSolution) {
  Rng rng(3);
  const auto p = slqr::testing::random_problem(rng, 2, 1, 3);
  ScenarioSet s;
  s.G = p.sys.G;
  s.x0 = p.sys.x0;
  for (int i = 0; i < 12; ++i) s.F.push_back(p.sys.F + rng.normal_matrix(2, 2, 0.3));
  const SubsampleSolver solver = scenario_solver(s, p.cost);
  for (Execution ex : {Execution::serial, Execution::parallel}) {
    SupportOptions opts;
    opts.execution = ex;
    const SupportSubsample sup = greedy_support_subsample(12, solver, 0.05, opts);
    ASSERT_GE(sup.cardinality, 1);
    EXPECT_LE(sup.cardinality, 4);  // at most d + 1 for d = m T stacked inputs
    const Vec on_support = solver(sup.indices).decision;
    EXPECT_TRUE(solutions_unchanged(on_support, sup.decision, 1e-6));
    for (std::size_t drop = 0; drop < sup.indices.size(); ++drop) {
      std::vector<int> rest = sup.indices;
      rest.erase(rest.begin() + static_cast<long>(drop));
      if (rest.empty()) continue;
      EXPECT_FALSE(solutions_unchanged(solver(rest).decision, sup.decision, 1e-6));
    }
  }
}

TEST(Support, InfluenceSkipsResolves) {
  int calls = 0;
  const SubsampleSolver solver = [&calls](const std::vector<int>& idx) {
    ++calls;
    SubsampleSolve out;
    const bool has3 = std::find(idx.begin(), idx.end(), 3) != idx.end();
    out.decision = Vec::Constant(1, has3 ? 1.0 : 0.0);
    out.influencing = std::vector<int>{3};
    return out;
  };
  SupportOptions opts;
  opts.execution = Execution::serial;
  const SupportSubsample sup = greedy_support_subsample(10, solver, 0.05, opts);
  EXPECT_EQ(sup.indices, std::vector<int>{3});
  EXPECT_LT(calls, 10);
}

TEST(Unchanged, RelativeTolerance) {
  const Vec a = Vec::Constant(3, 100.0);
  EXPECT_TRUE(solutions_unchanged(a + Vec::Constant(3, 1e-5), a, 1e-6));
  EXPECT_FALSE(solutions_unchanged(a + Vec::Constant(3, 1e-3), a, 1e-6));
}

TEST(Violation, RatesAndStability) {
  EXPECT_EQ(validate_violation(10, [](int) { return false; }), 0.0);
  EXPECT_EQ(validate_violation(10, [](int) { return true; }), 1.0);
  EXPECT_EQ(validate_violation(4, [](int i) { return i == 2; }), 0.25);
  const std::vector<Mat> fresh{Mat::Constant(1, 1, 0.5), Mat::Constant(1, 1, 1.5), Mat::Constant(1, 1, 3.0)};
  const double rate = stability_violation_rate(fresh, Mat::Ones(1, 1), [](const Mat&) { return Mat::Constant(1, 1, -1.0); });
  EXPECT_NEAR(rate, 1.0 / 3.0, 1e-15);
}

TEST(ScenarioSet, SubsetAndValidation) {
  ScenarioSet s = scalar_pair();
  const ScenarioSet t = s.subset({1});
  ASSERT_EQ(t.size(), 1);
  EXPECT_EQ(t.F[0](0, 0), 2.0);
  s.F.push_back(Mat::Zero(2, 2));
  EXPECT_THROW(s.validate(), ValidationError);
  ScenarioSet empty;
  EXPECT_THROW(empty.validate(), ValidationError);
}

}  // namespace
