#include <gtest/gtest.h>

#include <algorithm>
#include <complex>

#include <Eigen/Eigenvalues>

#include "slqr/errors.hpp"
#include "slqr/matrix_kernel.hpp"
#include "slqr/rng.hpp"

namespace {

using namespace slqr;

std::vector<std::complex<double>> sorted(std::vector<std::complex<double>> v) {
  std::sort(v.begin(), v.end(), [](auto a, auto b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return v;
}

TEST(Vec, StacksColumns) {
  Mat x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  const Vec v = vec(x);
  ASSERT_EQ(v.size(), 6);
  for (Index j = 0; j < 3; ++j) {
    for (Index i = 0; i < 2; ++i) EXPECT_EQ(v(i + 2 * j), x(i, j));
  }
  EXPECT_EQ(unvec(v, 2, 3), x);
  EXPECT_THROW((void)unvec(v, 4, 2), ValidationError);
}

TEST(Kron, MatchesDefinition) {
  Rng rng(1);
  const Mat a = rng.normal_matrix(2, 3);
  const Mat b = rng.normal_matrix(4, 2);
  const Mat k = kron(a, b);
  ASSERT_EQ(k.rows(), 8);
  ASSERT_EQ(k.cols(), 6);
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 3; ++j) {
      EXPECT_TRUE(k.block(4 * i, 2 * j, 4, 2).isApprox(a(i, j) * b));
    }
  }
}

TEST(Commutation, TransposesVec) {
  Rng rng(2);
  for (Index d1 = 1; d1 <= 4; ++d1) {
    for (Index d2 = 1; d2 <= 5; ++d2) {
      const Mat x = rng.normal_matrix(d1, d2);
      const Mat k = commutation_matrix(d1, d2);
      EXPECT_EQ(k * vec(x), vec(x.transpose()));
      EXPECT_TRUE((k.transpose() * k).isIdentity(0.0));
    }
  }
  EXPECT_TRUE(commutation_matrix(1, 4).isIdentity(0.0));
}

TEST(Eigenvalues, AgreeWithEigenSolver) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + trial % 7;
    const Mat x = rng.normal_matrix(n, n);
    const auto ours = sorted(eigenvalues(x));
    Eigen::EigenSolver<Mat> es(x, false);
    std::vector<std::complex<double>> ref(es.eigenvalues().data(), es.eigenvalues().data() + n);
    ref = sorted(ref);
    ASSERT_EQ(ours.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(std::abs(ours[i] - ref[i]), 0.0, 1e-9 * (1.0 + std::abs(ref[i])));
    }
  }
}

TEST(Eigenvalues, KnownSpectra) {
  Mat rot(2, 2);
  rot << 0, -1, 1, 0;
  EXPECT_NEAR(spectral_radius(rot), 1.0, 1e-14);
  Mat jordan(3, 3);
  jordan << 2, 1, 0, 0, 2, 1, 0, 0, 2;
  EXPECT_NEAR(spectral_radius(jordan), 2.0, 1e-4);
  EXPECT_EQ(spectral_radius(Mat::Zero(4, 4)), 0.0);
  EXPECT_THROW((void)eigenvalues(Mat::Zero(2, 3)), ValidationError);
}

TEST(Eigenvalues, LeslieCompanionForm) {
  // Companion-like matrices deflate slowly in unshifted QR; they are the
  // state matrices of the population models.
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Mat f = Mat::Zero(5, 5);
    for (Index j = 0; j < 5; ++j) f(0, j) = rng.uniform(0.0, 4.0);
    for (Index j = 0; j < 4; ++j) f(j + 1, j) = rng.uniform(0.0, 1.0);
    Eigen::EigenSolver<Mat> es(f, false);
    EXPECT_NEAR(spectral_radius(f), es.eigenvalues().cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(IsPsd, ShiftAndSymmetry) {
  const Mat id = Mat::Identity(3, 3);
  EXPECT_TRUE(is_psd(id).psd);
  EXPECT_TRUE(is_psd(id, 1.0).psd);
  EXPECT_FALSE(is_psd(id, 1.0 + 1e-9).psd);
  EXPECT_NEAR(is_psd(2.0 * id, 0.5).min_eigenvalue, 1.5, 1e-15);
  Mat asym = id;
  asym(0, 1) = 1.0;
  EXPECT_THROW((void)is_psd(asym), ValidationError);
  Mat bad = id;
  bad(2, 2) = std::nan("");
  EXPECT_THROW((void)is_psd(bad), ValidationError);
}

TEST(SolveLinear, SolvesAndFlagsSingular) {
  Rng rng(5);
  const Mat a = rng.normal_matrix(6, 6) + 6.0 * Mat::Identity(6, 6);
  const Mat b = rng.normal_matrix(6, 2);
  EXPECT_TRUE((a * solve_linear(a, b)).isApprox(b, 1e-12));
  Mat s = Mat::Ones(3, 3);
  EXPECT_THROW((void)solve_linear(s, Vec::Ones(3)), SingularMatrixError);
  EXPECT_THROW((void)solve_linear(a, Vec::Ones(3)), ValidationError);
}

TEST(MatrixPower, Basics) {
  Mat x(2, 2);
  x << 1, 1, 0, 1;
  EXPECT_EQ(matrix_power(x, 0), Mat::Identity(2, 2));
  Mat x5(2, 2);
  x5 << 1, 5, 0, 1;
  EXPECT_EQ(matrix_power(x, 5), x5);
}

TEST(PsdSqrt, SquaresBack) {
  Rng rng(6);
  const Mat a = rng.normal_matrix(4, 3);
  const Mat q = a * a.transpose();  // rank 3
  const Mat h = psd_sqrt(q);
  EXPECT_TRUE((h * h).isApprox(q, 1e-10));
  EXPECT_TRUE(h.isApprox(h.transpose()));
}

TEST(Validation, Helpers) {
  EXPECT_THROW(require_square(Mat::Zero(2, 3), "x"), ValidationError);
  EXPECT_NO_THROW(require_symmetric(Mat::Identity(3, 3), "x"));
  Mat inf = Mat::Zero(2, 2);
  inf(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(require_finite(inf, "x"), ValidationError);
}

}  // namespace
