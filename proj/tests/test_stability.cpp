#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "slqr/errors.hpp"
#include "slqr/stability.hpp"
#include "test_util.hpp"

namespace {

using namespace slqr;
using slqr::testing::random_problem;

LtiSystem scalar_system(double f, double g, double x0) {
  return {Mat::Constant(1, 1, f), Mat::Constant(1, 1, g), Vec::Constant(1, x0)};
}

CostSpec scalar_cost(double q, double r, double s, int horizon) {
  return {Mat::Constant(1, 1, q), Mat::Constant(1, 1, r), Mat::Constant(1, 1, s), horizon};
}

double penalized(const Mat& K, const Mat& C, const Mat& D, const LtiSystem& sys, const CostSpec& cost,
                 double mu) {
  return closed_loop_cost(sys.F, sys.G, sys.x0, cost, K) + (K * C - D).squaredNorm() / (2.0 * mu);
}

TEST(C1Gradient, MatchesCentralDifferences) {
  Rng rng(1);
  for (int sys_i = 0; sys_i < 5; ++sys_i) {
    const auto p = random_problem(rng, 3, 2, 6);
    for (int pt = 0; pt < 4; ++pt) {
      const Mat K = rng.normal_matrix(2, 3, 0.3), C = rng.normal_matrix(3, 3), D = rng.normal_matrix(2, 3);
      const ValueGradient vg = c1_value_and_gradient(K, C, D, p.sys, p.cost, 0.01);
      EXPECT_NEAR(vg.value, penalized(K, C, D, p.sys, p.cost, 0.01), 1e-9 * (1.0 + std::abs(vg.value)));
      Mat fd(2, 3);
      const double h = 1e-6 * (1.0 + K.norm());
      for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 3; ++j) {
          Mat kp = K, km = K;
          kp(i, j) += h;
          km(i, j) -= h;
          fd(i, j) = (penalized(kp, C, D, p.sys, p.cost, 0.01) - penalized(km, C, D, p.sys, p.cost, 0.01)) / (2 * h);
        }
      }
      EXPECT_LE((vg.gradient - fd).norm(), 1e-5 * (1.0 + fd.norm()));
    }
  }
}

TEST(C1Gradient, ScalarHorizonOneByHand) {
  const double f = 1.3, g = 0.7, q = 2.0, r = 0.5, s = 3.0, x = 1.5, k = -0.4;
  const ValueGradient vg = closed_loop_value_gradient(Mat::Constant(1, 1, f), Mat::Constant(1, 1, g),
                                                      Vec::Constant(1, x), scalar_cost(q, r, s, 1),
                                                      Mat::Constant(1, 1, k));
  EXPECT_NEAR(vg.value, x * x * (q + r * k * k + s * (f + g * k) * (f + g * k)), 1e-14);
  EXPECT_NEAR(vg.gradient(0, 0), 2 * x * x * (r * k + s * g * (f + g * k)), 1e-14);
}

TEST(C1Gradient, PenaltyTermOnly) {
  Rng rng(2);
  const auto p0 = random_problem(rng, 3, 2, 4);
  LtiSystem sys = p0.sys;
  sys.x0.setZero();
  const Mat K = rng.normal_matrix(2, 3), C = rng.normal_matrix(3, 3), D = rng.normal_matrix(2, 3);
  const ValueGradient vg = c1_value_and_gradient(K, C, D, sys, p0.cost, 0.1);
  EXPECT_NEAR(vg.value, (K * C - D).squaredNorm() / 0.2, 1e-12);
  EXPECT_TRUE(vg.gradient.isApprox((K * C * C.transpose() - D * C.transpose()) / 0.1, 1e-12));
  const ValueGradient tied = c1_value_and_gradient(K, C, K * C, p0.sys, p0.cost, 0.1);
  const ValueGradient plain = closed_loop_value_gradient(p0.sys.F, p0.sys.G, p0.sys.x0, p0.cost, K);
  EXPECT_NEAR(tied.value, plain.value, 1e-12 * (1.0 + plain.value));
  EXPECT_TRUE(tied.gradient.isApprox(plain.gradient, 1e-10));
}

TEST(S0, ScalarUnstablePlantIsStabilized) {
  const S0Config cfg;
  const StabilizedSolution s = s0_solve(scalar_system(2, 1, 1), scalar_cost(1, 1, 1, 8), cfg, 7);
  EXPECT_LT(std::abs(2.0 + s.K(0, 0)), 1.0);
  ASSERT_TRUE(s.certificate.has_value());
  EXPECT_TRUE(certificate_holds(*s.certificate, Mat::Constant(1, 1, 2), Mat::Constant(1, 1, 1)));
  EXPECT_NEAR(s.rho_closed, std::abs(2.0 + s.K(0, 0)), 1e-12);
}

TEST(S0, RandomSystemsStabilizedAndDeterministic) {
  Rng rng(3);
  for (int t = 0; t < 3; ++t) {
    auto p = random_problem(rng, 3, 2, 6);
    p.sys.F *= 2.0;
    const StabilizedSolution a = s0_solve(p.sys, p.cost, S0Config{}, 11);
    const StabilizedSolution b = s0_solve(p.sys, p.cost, S0Config{}, 11);
    EXPECT_LT(a.rho_closed, 1.0);
    EXPECT_EQ(a.K, b.K);
    EXPECT_GE(a.cost, optimal_cost(p.sys, p.cost) * (1.0 - 1e-10));
    ASSERT_FALSE(a.objective_history.empty());
  }
}

TEST(S0, Validation) {
  S0Config cfg;
  cfg.mu = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.xi = -1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Detectability, PbhTest) {
  Mat F(2, 2);
  F << 2, 0, 0, 1;
  Mat Q(2, 2);
  Q << 1, 0, 0, 0;
  EXPECT_FALSE(is_detectable(F, Q));
  EXPECT_TRUE(is_detectable(F, Mat::Identity(2, 2)));
  Mat Fs(2, 2);
  Fs << 2, 0, 0, 0.5;
  EXPECT_TRUE(is_detectable(Fs, Q));
}

TEST(Sinf, ScalarGoldenRatio) {
  const auto sol = solve_are(Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1), Mat::Ones(1, 1));
  ASSERT_TRUE(sol.has_value());
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  EXPECT_NEAR(sol->M(0, 0), phi, 1e-12);
  EXPECT_NEAR(sol->K(0, 0), -phi / (1.0 + phi), 1e-12);
  EXPECT_NEAR(1.0 + sol->K(0, 0), 1.0 / (1.0 + phi), 1e-12);
  const auto s = sinf_solve(scalar_system(1, 1, 1), scalar_cost(1, 1, 1, 8));
  ASSERT_TRUE(s.has_value());
  EXPECT_NEAR(s->rho_closed, 0.381966011250105, 1e-12);
}

TEST(Sinf, NotDetectableAndZeroWeight) {
  Mat F(2, 2);
  F << 2, 0, 0, 1;
  Mat Q(2, 2);
  Q << 1, 0, 0, 0;
  const LtiSystem sys{F, Mat::Ones(2, 1), (Vec(2) << 1, 0).finished()};
  EXPECT_FALSE(sinf_solve(sys, {Q, Mat::Ones(1, 1), Mat::Identity(2, 2), 8}).has_value());
  const auto z = solve_are(0.5 * Mat::Identity(2, 2), Mat::Ones(2, 1), Mat::Zero(2, 2), Mat::Ones(1, 1));
  ASSERT_TRUE(z.has_value());
  EXPECT_TRUE(z->M.isZero(1e-14));
  EXPECT_TRUE(z->K.isZero(1e-14));
}

TEST(Sinf, AreResidualAndStability) {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto p = random_problem(rng, 4, 2, 5);
    const auto sol = solve_are(2.0 * p.sys.F, p.sys.G, p.cost.Q, p.cost.R);
    ASSERT_TRUE(sol.has_value());
    EXPECT_LE(sol->residual, 1e-9 * (1.0 + sol->M.norm()));
    EXPECT_NEAR(are_residual(sol->M, 2.0 * p.sys.F, p.sys.G, p.cost.Q, p.cost.R), sol->residual,
                1e-9 * (1.0 + sol->M.norm()));
    EXPECT_LT(spectral_radius(2.0 * p.sys.F + p.sys.G * sol->K), 1.0);
  }
}

TEST(FeedbackFromL, Properties) {
  Rng rng(5);
  const Mat F = rng.normal_matrix(3, 3), G = rng.normal_matrix(3, 2), R = Mat::Identity(2, 2);
  EXPECT_TRUE(feedback_from_L(Mat::Zero(3, 3), F, G, R).isZero(0.0));
  const Mat L = rng.normal_matrix(3, 3);
  const Mat U = rng.normal_matrix(3, 3).householderQr().householderQ();
  EXPECT_TRUE(feedback_from_L(U * L, F, G, R).isApprox(feedback_from_L(L, F, G, R), 1e-10));
  const Mat W = L.transpose() * L;
  const Mat K = -(R + G.transpose() * W * G).ldlt().solve(G.transpose() * W * F);
  EXPECT_TRUE(feedback_from_L(L, F, G, R).isApprox(K, 1e-10));
  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  EXPECT_NEAR(feedback_from_L(Mat::Constant(1, 1, std::sqrt(phi)), Mat::Ones(1, 1), Mat::Ones(1, 1),
                              Mat::Ones(1, 1))(0, 0),
              -phi / (1.0 + phi), 1e-12);
}

TEST(S1S2, ObjectivesAtSpecialPoints) {
  Rng rng(6);
  const auto p = random_problem(rng, 3, 2, 5);
  const Mat zero = Mat::Zero(3, 3);
  EXPECT_NEAR(s1_objective(zero, p.sys, p.cost), closed_loop_cost(p.sys.F, p.sys.G, p.sys.x0, p.cost, Mat::Zero(2, 3)),
              1e-10);
  const Mat FT = matrix_power(p.sys.F, 5);
  EXPECT_NEAR(s2_objective(zero, p.sys, p.cost), p.sys.x0.dot(FT.transpose() * p.cost.S * FT * p.sys.x0),
              1e-9 * (1.0 + std::abs(p.sys.x0.dot(FT.transpose() * p.cost.S * FT * p.sys.x0))));
  const Mat Lsq = psd_sqrt(p.cost.S);
  EXPECT_NEAR(s2_objective(Lsq, p.sys, p.cost), p.sys.x0.dot(p.cost.S * p.sys.x0), 1e-8);

  const Mat Q = Eigen::Vector<double, 5>(5, 4, 3, 2, 1).asDiagonal();
  Rng lr(7);
  const LtiSystem leslie{lr.uniform_matrix(5, 5, 0, 1), Mat::Identity(5, 5), Vec::Unit(5, 0) * 5.0};
  const CostSpec lc{Q, 5.0 * Mat::Identity(5, 5), Q, 8};
  EXPECT_NEAR(s2_objective(psd_sqrt(Q), leslie, lc), 125.0, 1e-9);
}

TEST(S1S2, ScalarSolvesDecreaseObjective) {
  const LtiSystem sys = scalar_system(2, 1, 1);
  const CostSpec cost = scalar_cost(1, 1, 1, 8);
  const StabilizedSolution s1 = s1_solve(sys, cost, NmConfig{}, 3);
  EXPECT_LT(s1.objective, s1_objective(Mat::Zero(1, 1), sys, cost));
  EXPECT_GE(s1.objective, optimal_cost(sys, cost) * (1.0 - 1e-10));
  EXPECT_LT(s1.rho_closed, 1.0);
  ASSERT_TRUE(s1.L.has_value());
  EXPECT_NEAR(s1.K(0, 0), feedback_from_L(*s1.L, sys.F, sys.G, cost.R)(0, 0), 1e-14);
  const StabilizedSolution s2 = s2_solve(sys, cost, NmConfig{}, 3);
  EXPECT_LE(s2.objective, s2_objective(Mat::Zero(1, 1), sys, cost));
  const StabilizedSolution again = s2_solve(sys, cost, NmConfig{}, 3);
  EXPECT_EQ(s2.K, again.K);
}

TEST(Classic, LastGainAndOptimalCost) {
  Rng rng(8);
  const auto p = random_problem(rng, 3, 2, 6);
  const StabilizedSolution c = classic_solve(p.sys, p.cost);
  const FeedbackSequence fb = dre_sweep(p.sys, p.cost);
  EXPECT_TRUE(c.K.isApprox(fb.gains.back(), 1e-14));
  EXPECT_NEAR(c.objective, optimal_cost(p.sys, p.cost), 1e-12 * (1.0 + c.objective));
}

TEST(Method, Names) {
  for (Method m : {Method::s0, Method::s1, Method::s2, Method::sinf, Method::classic}) {
    EXPECT_EQ(method_from_string(to_string(m)), m);
  }
  EXPECT_THROW((void)method_from_string("s3"), ValidationError);
}

ScenarioSet copies(const LtiSystem& sys, int count) {
  ScenarioSet s;
  s.F.assign(static_cast<std::size_t>(count), sys.F);
  s.G = sys.G;
  s.x0 = sys.x0;
  return s;
}

TEST(Robust, SingleAndIdenticalScenariosReduceToDeterministic) {
  Rng rng(9);
  auto p = random_problem(rng, 2, 1, 5);
  p.sys.F *= 1.8;
  RobustConfig cfg;
  cfg.seed = 21;
  for (Method m : {Method::s0, Method::s1, Method::sinf}) {
    const RobustSolution one = robust_solve(m, copies(p.sys, 1), p.cost, cfg);
    const RobustSolution many = robust_solve(m, copies(p.sys, 4), p.cost, cfg);
    EXPECT_TRUE(many.solution.K.isApprox(one.solution.K, 1e-10)) << to_string(m);
    if (m != Method::s1) EXPECT_LT(one.solution.rho_closed, 1.0) << to_string(m);
  }
  const RobustSolution r0 = robust_solve(Method::s0, copies(p.sys, 1), p.cost, cfg);
  const StabilizedSolution d0 = s0_solve(p.sys, p.cost, cfg.s0, cfg.seed);
  EXPECT_TRUE(r0.solution.K.isApprox(d0.K, 1e-10));
  const RobustSolution r1 = robust_solve(Method::s1, copies(p.sys, 1), p.cost, cfg);
  const StabilizedSolution d1 = s1_solve(p.sys, p.cost, cfg.nm, cfg.seed);
  EXPECT_TRUE(r1.solution.K.isApprox(d1.K, 1e-10));
}

TEST(Robust, MaxCostOverScenarios) {
  Rng rng(10);
  auto p = random_problem(rng, 2, 1, 5);
  ScenarioSet s = copies(p.sys, 3);
  s.F[1] = 1.5 * p.sys.F;
  s.F[2] = 0.5 * p.sys.F;
  RobustConfig cfg;
  const RobustSolution r = robust_solve(Method::s0, s, p.cost, cfg);
  double worst = 0.0;
  for (const Mat& f : s.F) {
    const Mat k = r.gain_for(f, s.G, p.cost.R);
    EXPECT_LT(spectral_radius(f + s.G * k), 1.0);
    worst = std::max(worst, closed_loop_cost(f, s.G, s.x0, p.cost, k));
  }
  EXPECT_NEAR(r.solution.objective, worst, 1e-8 * (1.0 + worst));
  ASSERT_TRUE(r.witnesses.has_value());
  EXPECT_FALSE(r.witnesses->empty());
}

}  // namespace
