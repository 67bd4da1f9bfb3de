#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "slqr/errors.hpp"
#include "slqr/lmi.hpp"
#include "test_util.hpp"

namespace {

using namespace slqr;

// Plant with prescribed closed-loop spectral radius under K = 0.
Mat scaled_to_radius(Rng& rng, Index n, double rho) {
  const Mat a = rng.normal_matrix(n, n);
  return a * (rho / spectral_radius(a));
}

// Discrete Lyapunov solution X = sum_k A^k A'^k via vectorization.
Mat controllability_gramian(const Mat& A) {
  const Index n = A.rows();
  const Mat lhs = Mat::Identity(n * n, n * n) - kron(A, A);
  return unvec(lhs.fullPivLu().solve(vec(Mat::Identity(n, n))), n, n);
}

TEST(LmiBlock, Layout) {
  Rng rng(1);
  const Mat F = rng.normal_matrix(3, 3), G = rng.normal_matrix(3, 2);
  const Mat P = slqr::testing::random_spd(rng, 3, 1.0), C = rng.normal_matrix(3, 3), D = rng.normal_matrix(2, 3);
  const Mat M = lmi_block(F, G, P, C, D);
  ASSERT_EQ(M.rows(), 6);
  EXPECT_EQ(M.topLeftCorner(3, 3), P);
  EXPECT_TRUE(M.topRightCorner(3, 3).isApprox(F * C + G * D));
  EXPECT_TRUE(M.bottomLeftCorner(3, 3).isApprox((F * C + G * D).transpose()));
  EXPECT_TRUE(M.bottomRightCorner(3, 3).isApprox(C + C.transpose() - P));
}

TEST(Certificate, LyapunovConstructionHolds) {
  // P = X, C = X with X the Gramian of A: [X, A X; X A', X] > 0 by Schur complement.
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const Mat F = scaled_to_radius(rng, 3, 0.8);
    const Mat G = rng.normal_matrix(3, 1);
    const Mat K = Mat::Zero(1, 3);
    const Mat X = controllability_gramian(F);
    LmiCertificate cert{X, X, K * X, 1e-5};
    EXPECT_TRUE(certificate_holds(cert, F, G));
    EXPECT_TRUE(certified_gain(cert).isZero(1e-12));
  }
  const Mat I = Mat::Identity(2, 2);
  EXPECT_FALSE(certificate_holds({I, I, Mat::Zero(1, 2), 1e-5}, 2.0 * I, Mat::Ones(2, 1)));
}

TEST(CertifiedGain, RecoversK) {
  Rng rng(3);
  const Mat C = rng.normal_matrix(4, 4) + 4.0 * Mat::Identity(4, 4);
  const Mat K = rng.normal_matrix(2, 4);
  LmiCertificate cert{Mat::Identity(4, 4), C, K * C, 1e-5};
  EXPECT_TRUE(certified_gain(cert).isApprox(K, 1e-12));
}

TEST(LyapunovCheck, AgreesWithSpectralRadius) {
  Rng rng(4);
  int stable = 0;
  for (int t = 0; t < 40; ++t) {
    const Index n = 1 + t % 4, m = 1 + t % 2;
    const Mat F = rng.normal_matrix(n, n), G = rng.normal_matrix(n, m), K = rng.normal_matrix(m, n, 0.5);
    const double rho = spectral_radius(F + G * K);
    if (rho > 0.95 && rho < 1.05) continue;
    const LmiVerdict v = lyapunov_lmi_check(F, G, K);
    EXPECT_EQ(v.feasible, rho < 1.0) << "rho " << rho;
    if (v.feasible) {
      ++stable;
      ASSERT_TRUE(v.certificate.has_value());
      EXPECT_TRUE(certificate_holds(*v.certificate, F, G));
      EXPECT_TRUE(((v.certificate->D - K * v.certificate->C).norm()) <= 1e-12 * (1.0 + v.certificate->D.norm()));
    }
  }
  EXPECT_GT(stable, 0);
}

TEST(LyapunovCheck, NearBoundary) {
  const Mat G = Mat::Ones(2, 1), K = Mat::Zero(1, 2);
  EXPECT_TRUE(lyapunov_lmi_check(0.99 * Mat::Identity(2, 2), G, K).feasible);
  EXPECT_FALSE(lyapunov_lmi_check(1.01 * Mat::Identity(2, 2), G, K).feasible);
  EXPECT_THROW((void)lyapunov_lmi_check(Mat::Identity(2, 2), G, Mat::Zero(2, 2)), ValidationError);
}

TEST(C2, ExactForStabilizingGain) {
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    const Mat F = rng.normal_matrix(3, 3), G = rng.normal_matrix(3, 2);
    // Deadbeat-ish: pick K so F + G K is scaled down.
    const Mat K = -G.completeOrthogonalDecomposition().pseudoInverse() * F;
    if (spectral_radius(F + G * K) >= 0.9) continue;
    const C2Result r = c2_solve(K, F, G, 1e-5);
    EXPECT_TRUE(r.exact);
    EXPECT_LE(r.residual, 1e-12 * (1.0 + r.cert.D.norm()));
    EXPECT_TRUE(certificate_holds(r.cert, F, G));
    EXPECT_NEAR(r.cert.P.trace(), 3.0, 1e-9);
  }
}

TEST(C2, UnstableGainLeavesResidual) {
  const Mat F = 1.5 * Mat::Identity(2, 2), G = Mat::Identity(2, 2);
  const C2Result r = c2_solve(Mat::Zero(2, 2), F, G, 1e-5);
  EXPECT_FALSE(r.exact);
  EXPECT_GT(r.residual, 1e-3);
  EXPECT_TRUE(certificate_holds(r.cert, F, G));
  // The certified gain itself stabilizes.
  EXPECT_LT(spectral_radius(F + G * certified_gain(r.cert)), 1.0);
}

TEST(C2, MultipleScenariosAndWarmStart) {
  Rng rng(6);
  std::vector<Mat> fs;
  const Mat base = scaled_to_radius(rng, 3, 1.3);
  for (int i = 0; i < 6; ++i) fs.push_back(base + rng.normal_matrix(3, 3, 0.05));
  const Mat G = Mat::Identity(3, 3);
  const Mat K = -0.5 * Mat::Identity(3, 3);
  const C2Result r = c2_solve(K, fs, G, 1e-5);
  for (const Mat& f : fs) EXPECT_TRUE(certificate_holds(r.cert, f, G));
  ASSERT_FALSE(r.working.empty());
  for (int w : r.working) EXPECT_TRUE(std::find(r.influencing.begin(), r.influencing.end(), w) != r.influencing.end());
  const C2Result again = c2_solve(K, fs, G, 1e-5, r.cert, {}, r.working);
  EXPECT_LE(again.residual, r.residual * (1.0 + 1e-9) + 1e-14);
  for (const Mat& f : fs) EXPECT_TRUE(certificate_holds(again.cert, f, G));
}

double oracle_barrier(const std::vector<Mat>& fs, const Mat& G, double xi, const Mat& P, const Mat& C,
                      const Mat& D) {
  double v = 0.0;
  for (const Mat& f : fs) {
    const Mat M = lmi_block(f, G, P, C, D);
    const Mat shifted = 0.5 * (M + M.transpose()) - xi * Mat::Identity(M.rows(), M.cols());
    Eigen::LLT<Mat> llt(shifted);
    if (llt.info() != Eigen::Success) return std::nan("");
    v -= 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  }
  return v;
}

// z = [upper triangle of P by columns, vec C, vec D].
void unpack(const Vec& z, Index n, Index m, Mat& P, Mat& C, Mat& D) {
  P.resize(n, n);
  Index idx = 0;
  for (Index l = 0; l < n; ++l) {
    for (Index k = 0; k <= l; ++k, ++idx) P(k, l) = P(l, k) = z(idx);
  }
  C = unvec(z.segment(idx, n * n), n, n);
  D = unvec(z.segment(idx + n * n, m * n), m, n);
}

TEST(BarrierDerivatives, MatchOracleAndFiniteDifferences) {
  Rng rng(7);
  const Index n = 2, m = 1;
  std::vector<Mat> fs{scaled_to_radius(rng, n, 0.5), scaled_to_radius(rng, n, 0.6)};
  const Mat G = rng.normal_matrix(n, m);
  const Mat X = controllability_gramian(fs[0]) + controllability_gramian(fs[1]);
  Vec z(n * (n + 1) / 2 + n * n + m * n);
  {
    Index idx = 0;
    for (Index l = 0; l < n; ++l) {
      for (Index k = 0; k <= l; ++k, ++idx) z(idx) = X(k, l);
    }
    z.segment(idx, n * n) = vec(X);
    z.segment(idx + n * n, m * n).setZero();
  }
  Mat P, C, D;
  unpack(z, n, m, P, C, D);
  const auto d = lmi_barrier_derivatives(fs, G, 1e-5, P, C, D, Execution::serial);
  ASSERT_TRUE(d.has_value());
  EXPECT_NEAR(d->value, oracle_barrier(fs, G, 1e-5, P, C, D), 1e-10 * (1.0 + std::abs(d->value)));
  ASSERT_EQ(d->gradient.size(), z.size());
  const double h = 1e-5;
  for (Index j = 0; j < z.size(); ++j) {
    Vec zp = z, zm = z;
    zp(j) += h;
    zm(j) -= h;
    Mat Pp, Cp, Dp, Pm, Cm, Dm;
    unpack(zp, n, m, Pp, Cp, Dp);
    unpack(zm, n, m, Pm, Cm, Dm);
    const double fd = (oracle_barrier(fs, G, 1e-5, Pp, Cp, Dp) - oracle_barrier(fs, G, 1e-5, Pm, Cm, Dm)) / (2 * h);
    EXPECT_NEAR(d->gradient(j), fd, 1e-5 * (1.0 + std::abs(fd))) << "component " << j;
    const auto dp = lmi_barrier_derivatives(fs, G, 1e-5, Pp, Cp, Dp, Execution::serial);
    const auto dm = lmi_barrier_derivatives(fs, G, 1e-5, Pm, Cm, Dm, Execution::serial);
    const Vec hfd = (dp->gradient - dm->gradient) / (2 * h);
    EXPECT_LE((d->hessian.col(j) - hfd).norm(), 1e-4 * (1.0 + hfd.norm())) << "column " << j;
  }
  const auto par = lmi_barrier_derivatives(fs, G, 1e-5, P, C, D, Execution::parallel);
  EXPECT_EQ(par->value, d->value);
  EXPECT_EQ(par->gradient, d->gradient);
  EXPECT_EQ(par->hessian, d->hessian);
  EXPECT_FALSE(lmi_barrier_derivatives(fs, G, 1e-5, -P, C, D, Execution::serial).has_value());
}

}  // namespace
