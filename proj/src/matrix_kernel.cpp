#include "slqr/matrix_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "slqr/errors.hpp"

namespace slqr {

void require_finite(const Mat& x, std::string_view name) {
  if (!x.allFinite()) {
    throw ValidationError(std::string(name) + ": non-finite entry");
  }
}

void require_square(const Mat& x, std::string_view name) {
  if (x.rows() != x.cols()) {
    throw ValidationError(std::string(name) + ": expected a square matrix, got " +
                          std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

void require_symmetric(const Mat& x, std::string_view name) {
  require_square(x, name);
  const double scale = x.norm();
  if ((x - x.transpose()).norm() > kSymmetryTol * scale) {
    throw ValidationError(std::string(name) + ": matrix is not symmetric");
  }
}

Mat kron(const Mat& x, const Mat& y) {
  Mat out(x.rows() * y.rows(), x.cols() * y.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
    }
  }
  return out;
}

Vec vec(const Mat& x) { return Eigen::Map<const Vec>(x.data(), x.size()); }

Mat unvec(const Vec& v, Index rows, Index cols) {
  if (v.size() != rows * cols) {
    throw ValidationError("unvec: size mismatch");
  }
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

Mat commutation_matrix(Index d1, Index d2) {
  if (d1 < 1 || d2 < 1) {
    throw ValidationError("commutation_matrix: dimensions must be positive");
  }
  Mat k = Mat::Zero(d1 * d2, d1 * d2);
  for (Index i = 0; i < d1; ++i) {
    for (Index j = 0; j < d2; ++j) {
      k(j + i * d2, i + j * d1) = 1.0;
    }
  }
  return k;
}

namespace {

// In-place Householder reduction to upper Hessenberg form.
void reduce_to_hessenberg(Mat& h) {
  const Index n = h.rows();
  for (Index k = 0; k + 2 < n; ++k) {
    Vec v = h.col(k).tail(n - k - 1);
    const double alpha = v.norm();
    if (alpha == 0.0) continue;
    v(0) += (v(0) >= 0.0 ? alpha : -alpha);
    const double vnorm = v.norm();
    if (vnorm == 0.0) continue;
    v /= vnorm;
    auto rows = h.bottomRows(n - k - 1);
    rows -= 2.0 * v * (v.transpose() * rows);
    auto cols = h.rightCols(n - k - 1);
    cols -= 2.0 * (cols * v) * v.transpose();
  }
  for (Index j = 0; j < n; ++j) {
    for (Index i = j + 2; i < n; ++i) h(i, j) = 0.0;
  }
}

inline double sign_of(double a, double b) { return b >= 0.0 ? std::abs(a) : -std::abs(a); }

// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
// Indices follow the classical 1-based formulation through the accessor.
std::vector<std::complex<double>> hessenberg_qr(Mat& hm) {
  const int n = static_cast<int>(hm.rows());
  auto a = [&hm](int i, int j) -> double& { return hm(i - 1, j - 1); };
  std::vector<double> wr(n + 1, 0.0), wi(n + 1, 0.0);

  double anorm = 0.0;
  for (int i = 1; i <= n; ++i) {
    for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(a(i, j));
  }

  int nn = n;
  double t = 0.0;
  double p = 0, q = 0, r = 0, s = 0, w = 0, x = 0, y = 0, z = 0;
  while (nn >= 1) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l >= 2; --l) {
        s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) + s == s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        wr[nn] = x + t;
        wi[nn] = 0.0;
        --nn;
      } else {
        y = a(nn - 1, nn - 1);
        w = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + w;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wr[nn - 1] = wr[nn] = x + z;
            if (z != 0.0) wr[nn] = x - w / z;
            wi[nn - 1] = wi[nn] = 0.0;
          } else {
            wr[nn - 1] = wr[nn] = x + p;
            wi[nn] = z;
            wi[nn - 1] = -z;
          }
          nn -= 2;
        } else {
          if (its == 30 * n) {
            throw ConvergenceError("eigenvalues: QR iteration did not converge");
          }
          if (its > 0 && its % 10 == 0) {
            // exceptional shift
            t += x;
            for (int i = 1; i <= nn; ++i) a(i, i) -= x;
            s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v =
                std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u + v == v) break;
          }
          for (int i = m + 2; i <= nn; ++i) {
            a(i, i - 2) = 0.0;
            if (i != m + 2) a(i, i - 3) = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k != nn - 1) r = a(k + 2, k - 1);
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k != nn - 1) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k != nn - 1) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l < nn - 1);
  }

  std::vector<std::complex<double>> out;
  out.reserve(n);
  for (int i = 1; i <= n; ++i) out.emplace_back(wr[i], wi[i]);
  return out;
}

}  // namespace

std::vector<std::complex<double>> eigenvalues(const Mat& x) {
  require_square(x, "eigenvalues");
  require_finite(x, "eigenvalues");
  if (x.rows() == 0) return {};
  Mat h = x;
  reduce_to_hessenberg(h);
  return hessenberg_qr(h);
}

double spectral_radius(const Mat& x) {
  double rho = 0.0;
  for (const auto& ev : eigenvalues(x)) rho = std::max(rho, std::abs(ev));
  return rho;
}

PsdResult is_psd(const Mat& x, double shift) {
  require_finite(x, "is_psd");
  require_symmetric(x, "is_psd");
  Mat s = symmetrize(x);
  s.diagonal().array() -= shift;
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw ConvergenceError("is_psd: symmetric eigensolver failed");
  }
  const double lmin = es.eigenvalues().minCoeff();
  // Rounding in the eigensolver is relative to the matrix scale.
  const double tol = 1e-13 * std::max(1.0, s.cwiseAbs().maxCoeff());
  return {lmin >= -tol, lmin};
}

Mat solve_linear(const Mat& a, const Mat& b) {
  require_square(a, "solve_linear");
  if (b.rows() != a.rows()) {
    throw ValidationError("solve_linear: right-hand side has " + std::to_string(b.rows()) +
                          " rows, expected " + std::to_string(a.rows()));
  }
  require_finite(a, "solve_linear(A)");
  require_finite(b, "solve_linear(B)");
  const double amax = a.size() > 0 ? a.cwiseAbs().maxCoeff() : 0.0;
  Eigen::PartialPivLU<Mat> lu(a);
  const auto& packed = lu.matrixLU();
  for (Index i = 0; i < a.rows(); ++i) {
    if (!(std::abs(packed(i, i)) > kPivotTol * amax)) {
      throw SingularMatrixError("solve_linear: matrix is singular to working tolerance");
    }
  }
  return lu.solve(b);
}

Mat matrix_power(const Mat& x, int k) {
  require_square(x, "matrix_power");
  Mat out = Mat::Identity(x.rows(), x.cols());
  for (int i = 0; i < k; ++i) out = out * x;
  return out;
}

Mat psd_sqrt(const Mat& x) {
  require_symmetric(x, "psd_sqrt");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(x));
  Vec d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace slqr
