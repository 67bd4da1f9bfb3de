#pragma once

// Dense matrix primitives shared by every solver in the library.
//
// Matrices are Eigen::MatrixXd, i.e. column-major storage. vec() stacks
// columns, so vec(X)[i + j * rows] == X(i, j), and all Kronecker/commutation
// identities below use that convention.

#include <complex>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace slqr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

// Relative symmetry tolerance: ||X - X^T||_F <= kSymmetryTol * ||X||_F.
inline constexpr double kSymmetryTol = 1e-9;
// LU pivots below kPivotTol * max|A_ij| are treated as zero.
inline constexpr double kPivotTol = 1e-12;

// Throws ValidationError if any entry is NaN or Inf.
void require_finite(const Mat& x, std::string_view name);
void require_square(const Mat& x, std::string_view name);
void require_symmetric(const Mat& x, std::string_view name);

[[nodiscard]] Mat kron(const Mat& x, const Mat& y);
[[nodiscard]] Vec vec(const Mat& x);
[[nodiscard]] Mat unvec(const Vec& v, Index rows, Index cols);

// The d1*d2 permutation K with K * vec(X) == vec(X^T) for every d1 x d2 X.
[[nodiscard]] Mat commutation_matrix(Index d1, Index d2);

[[nodiscard]] inline Mat symmetrize(const Mat& x) { return 0.5 * (x + x.transpose()); }

// Eigenvalues of a general real square matrix: Householder reduction to upper
// Hessenberg form followed by the Francis double-shift QR iteration. Throws
// ConvergenceError when an eigenvalue fails to deflate within 30 n sweeps.
[[nodiscard]] std::vector<std::complex<double>> eigenvalues(const Mat& x);
[[nodiscard]] double spectral_radius(const Mat& x);

struct PsdResult {
  bool psd = false;
  double min_eigenvalue = 0.0;  // smallest eigenvalue of sym(X) - shift * I
  explicit operator bool() const { return psd; }
};

// Decides sym(X) - shift * I >= 0. Throws ValidationError when X is not
// symmetric to kSymmetryTol.
[[nodiscard]] PsdResult is_psd(const Mat& x, double shift = 0.0);

// Partial-pivot LU solve of A X = B. Throws SingularMatrixError when a pivot
// falls below kPivotTol * max|A_ij|.
[[nodiscard]] Mat solve_linear(const Mat& a, const Mat& b);

[[nodiscard]] Mat matrix_power(const Mat& x, int k);

// Symmetric PSD square root via the eigendecomposition; tiny negative
// eigenvalues from rounding are clipped to zero.
[[nodiscard]] Mat psd_sqrt(const Mat& x);

}  // namespace slqr
