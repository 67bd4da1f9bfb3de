#include "slqr/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "slqr/errors.hpp"

namespace slqr {

Mat lmi_block(const Mat& F, const Mat& G, const Mat& P, const Mat& C, const Mat& D) {
  const Index n = F.rows();
  Mat E = F * C;
  if (G.cols() > 0) E += G * D;
  Mat M(2 * n, 2 * n);
  M.topLeftCorner(n, n) = P;
  M.topRightCorner(n, n) = E;
  M.bottomLeftCorner(n, n) = E.transpose();
  M.bottomRightCorner(n, n) = C + C.transpose() - P;
  return M;
}

bool certificate_holds(const LmiCertificate& cert, const Mat& F, const Mat& G) {
  if (!cert.P.allFinite() || !cert.C.allFinite() || !cert.D.allFinite()) return false;
  const Mat M = symmetrize(lmi_block(F, G, symmetrize(cert.P), cert.C, cert.D));
  return is_psd(M, cert.xi).psd;
}

Mat certified_gain(const LmiCertificate& cert) {
  // K C = D  <=>  C' K' = D'
  return solve_linear(cert.C.transpose(), cert.D.transpose()).transpose();
}

namespace {

struct Pair {
  double c;
  int a;
  int b;
};

double min_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sym), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Barrier for the family M_i(P, C, D) - (xi + s) I > 0 plus an optional ball
// ||C||^2 + ||D||^2 < omega. Variables z = [svec P, vec C, vec D, (s)].
class BarrierProblem {
 public:
  BarrierProblem(std::vector<Mat> fs, Mat g, double xi, bool slack, double omega)
      : fs_(std::move(fs)), g_(std::move(g)), xi_(xi), slack_(slack), omega_(omega) {
    n_ = fs_.front().rows();
    m_ = g_.cols();
    np_ = n_ * (n_ + 1) / 2;
    nc_ = n_ * n_;
    nd_ = m_ * n_;
    nv_ = np_ + nc_ + nd_ + (slack_ ? 1 : 0);
    use_ball_ = std::isfinite(omega_) && omega_ > 0.0;

    const int n = static_cast<int>(n_);
    for (int l = 0; l < n; ++l) {
      for (int k = 0; k <= l; ++k) {
        if (k == l) {
          diag_pos_.push_back(static_cast<Index>(pairs_.size()));
          pairs_.push_back({{0.5, k, k}, {-0.5, n + k, n + k}});
        } else {
          pairs_.push_back({{1.0, k, l}, {-1.0, n + k, n + l}});
        }
      }
    }
    for (int l = 0; l < n; ++l) {
      for (int k = 0; k < n; ++k) pairs_.push_back({{1.0, 2 * n + k, n + l}});
    }
    for (int l = 0; l < n; ++l) {
      for (int k = 0; k < static_cast<int>(m_); ++k) pairs_.push_back({{1.0, 3 * n + k, n + l}});
    }
  }

  [[nodiscard]] Index nv() const { return nv_; }
  [[nodiscard]] Index n() const { return n_; }
  [[nodiscard]] bool has_slack() const { return slack_; }
  [[nodiscard]] Index c_offset() const { return np_; }
  [[nodiscard]] Index d_offset() const { return np_ + nc_; }
  [[nodiscard]] double degrees() const {
    return static_cast<double>(fs_.size()) * 2.0 * static_cast<double>(n_) + (use_ball_ ? 1.0 : 0.0);
  }

  [[nodiscard]] Vec trace_row() const {
    Vec a = Vec::Zero(nv_);
    for (Index p : diag_pos_) a(p) = 1.0;
    return a;
  }

  void unpack(const Vec& z, Mat& P, Mat& C, Mat& D, double& s) const {
    P.resize(n_, n_);
    Index idx = 0;
    for (Index l = 0; l < n_; ++l) {
      for (Index k = 0; k <= l; ++k, ++idx) {
        P(k, l) = z(idx);
        P(l, k) = z(idx);
      }
    }
    C = Eigen::Map<const Mat>(z.data() + np_, n_, n_);
    D = Eigen::Map<const Mat>(z.data() + np_ + nc_, m_, n_);
    s = slack_ ? z(nv_ - 1) : 0.0;
  }

  [[nodiscard]] Vec pack(const Mat& P, const Mat& C, const Mat& D, double s) const {
    Vec z(nv_);
    Index idx = 0;
    for (Index l = 0; l < n_; ++l) {
      for (Index k = 0; k <= l; ++k, ++idx) z(idx) = 0.5 * (P(k, l) + P(l, k));
    }
    z.segment(np_, nc_) = Eigen::Map<const Vec>(C.data(), nc_);
    if (nd_ > 0) z.segment(np_ + nc_, nd_) = Eigen::Map<const Vec>(D.data(), nd_);
    if (slack_) z(nv_ - 1) = s;
    return z;
  }

  [[nodiscard]] double shifted_min_eigenvalue(const Vec& z) const {
    Mat P, C, D;
    double s;
    unpack(z, P, C, D, s);
    double lmin = std::numeric_limits<double>::infinity();
    for (const Mat& F : fs_) lmin = std::min(lmin, min_eigenvalue(lmi_block(F, g_, P, C, D)) - xi_);
    return lmin;
  }

  // Barrier value, +inf outside the domain.
  [[nodiscard]] double value(const Vec& z) const {
    if (!z.allFinite()) return std::numeric_limits<double>::infinity();
    Mat P, C, D;
    double s;
    unpack(z, P, C, D, s);
    double total = 0.0;
    if (use_ball_) {
      const double r = omega_ - C.squaredNorm() - D.squaredNorm();
      if (!(r > 0.0)) return std::numeric_limits<double>::infinity();
      total -= std::log(r);
    }
    for (const Mat& F : fs_) {
      Mat M = lmi_block(F, g_, P, C, D);
      M.diagonal().array() -= xi_ + s;
      Eigen::LLT<Mat> llt(M);
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      const auto& L = llt.matrixLLT();
      double logdet = 0.0;
      for (Index j = 0; j < M.rows(); ++j) {
        if (!(L(j, j) > 0.0)) return std::numeric_limits<double>::infinity();
        logdet += std::log(L(j, j));
      }
      total -= 2.0 * logdet;
    }
    return total;
  }

  bool derivatives(const Vec& z, double& value, Vec& grad, Mat& hess, Execution ex) const {
    Mat P, C, D;
    double s;
    unpack(z, P, C, D, s);
    const int count = static_cast<int>(fs_.size());
    std::vector<double> vals(static_cast<std::size_t>(count));
    std::vector<Vec> grads(static_cast<std::size_t>(count));
    std::vector<Mat> hessians(static_cast<std::size_t>(count));
    std::vector<char> ok(static_cast<std::size_t>(count), 0);
    for_each_index(ex, count, [&](int i) {
      ok[i] = lmi_terms(fs_[static_cast<std::size_t>(i)], P, C, D, s, vals[i], grads[i], hessians[i]);
    });
    value = 0.0;
    grad = Vec::Zero(nv_);
    hess = Mat::Zero(nv_, nv_);
    for (int i = 0; i < count; ++i) {
      if (!ok[i]) return false;
      value += vals[i];
      grad += grads[i];
      hess += hessians[i];
    }
    if (use_ball_) {
      const double r = omega_ - C.squaredNorm() - D.squaredNorm();
      if (!(r > 0.0)) return false;
      value -= std::log(r);
      const Index len = nc_ + nd_;
      const Vec q = z.segment(np_, len);
      grad.segment(np_, len) += 2.0 * q / r;
      hess.block(np_, np_, len, len) += (4.0 / (r * r)) * q * q.transpose();
      hess.block(np_, np_, len, len).diagonal().array() += 2.0 / r;
    }
    return true;
  }

 private:
  bool lmi_terms(const Mat& F, const Mat& P, const Mat& C, const Mat& D, double s, double& val,
                 Vec& grad, Mat& hess) const {
    const Index n2 = 2 * n_;
    Mat M = lmi_block(F, g_, P, C, D);
    M.diagonal().array() -= xi_ + s;
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success) return false;
    const Mat L = llt.matrixL();
    double logdet = 0.0;
    for (Index j = 0; j < n2; ++j) {
      if (!(L(j, j) > 0.0)) return false;
      logdet += std::log(L(j, j));
    }
    val = -2.0 * logdet;

    // W = L^{-1}, so M^{-1} = W' W and W A W' carries every second-order term.
    const Mat W = L.triangularView<Eigen::Lower>().solve(Mat::Identity(n2, n2));
    Mat U(n2, 3 * n_ + m_);
    U.leftCols(n2) = W;
    U.middleCols(n2, n_) = W.leftCols(n_) * F + W.rightCols(n_);
    if (m_ > 0) U.rightCols(m_) = W.leftCols(n_) * g_;
    const Mat gam = U.transpose() * U;

    grad = Vec::Zero(nv_);
    hess = Mat::Zero(nv_, nv_);
    const Index nd = static_cast<Index>(pairs_.size());
    for (Index j = 0; j < nd; ++j) {
      double gj = 0.0;
      for (const Pair& p : pairs_[j]) gj -= 2.0 * p.c * gam(p.a, p.b);
      grad(j) = gj;
      for (Index k = j; k < nd; ++k) {
        double h = 0.0;
        for (const Pair& p : pairs_[j]) {
          for (const Pair& q : pairs_[k]) {
            h += p.c * q.c * (gam(p.a, q.a) * gam(p.b, q.b) + gam(p.a, q.b) * gam(p.b, q.a));
          }
        }
        hess(j, k) = 2.0 * h;
        hess(k, j) = 2.0 * h;
      }
    }
    if (slack_) {
      const Index js = nv_ - 1;
      const Mat Z = W.transpose() * U;
      const Mat omega = Z.transpose() * Z;
      grad(js) = W.squaredNorm();
      for (Index j = 0; j < nd; ++j) {
        double h = 0.0;
        for (const Pair& p : pairs_[j]) h -= 2.0 * p.c * omega(p.a, p.b);
        hess(j, js) = h;
        hess(js, j) = h;
      }
      hess(js, js) = (W.transpose() * W).squaredNorm();
    }
    return true;
  }

  std::vector<Mat> fs_;
  Mat g_;
  double xi_;
  bool slack_;
  double omega_;
  bool use_ball_ = true;
  Index n_ = 0, m_ = 0, np_ = 0, nc_ = 0, nd_ = 0, nv_ = 0;
  std::vector<std::vector<Pair>> pairs_;
  std::vector<Index> diag_pos_;
};

// Value, and optionally gradient/Hessian, of the smooth objective part.
using ObjectiveFn = std::function<double(const Vec& z, Vec* grad, Mat* hess)>;

struct CenterResult {
  int steps = 0;
  bool stopped_early = false;
};

// Equality-constrained Newton centering of obj + tau * barrier, keeping
// trace(P) fixed. `stop` is checked after every accepted step.
CenterResult center(const BarrierProblem& bp, Vec& z, double tau, const ObjectiveFn& obj,
                    const BarrierOptions& opts, const std::function<bool(const Vec&)>& stop) {
  CenterResult res;
  const Vec a = bp.trace_row();
  const Index nv = bp.nv();
  for (int it = 0; it < opts.max_newton; ++it) {
    double bval = 0.0;
    Vec bgrad;
    Mat bhess;
    if (!bp.derivatives(z, bval, bgrad, bhess, opts.execution)) {
      throw ConvergenceError("lmi barrier: iterate left the domain");
    }
    Vec og = Vec::Zero(nv);
    Mat oh = Mat::Zero(nv, nv);
    const double oval = obj(z, &og, &oh);
    const Vec g = og + tau * bgrad;
    const Mat H = oh + tau * bhess;

    Vec x1, x2;
    Eigen::LLT<Mat> llt(H);
    if (llt.info() == Eigen::Success) {
      x1 = llt.solve(-g);
      x2 = llt.solve(a);
    } else {
      Eigen::LDLT<Mat> ldlt(H);
      x1 = ldlt.solve(-g);
      x2 = ldlt.solve(a);
    }
    const double denom = a.dot(x2);
    const Vec dz = denom != 0.0 ? Vec(x1 - (a.dot(x1) / denom) * x2) : x1;
    const double dec = -g.dot(dz);
    const double phi0 = oval + tau * bval;
    const double stop_tol = opts.newton_tol * std::max(1.0, std::abs(phi0));
    if (dz.allFinite() && std::abs(0.5 * dec) <= stop_tol) break;
    if (!dz.allFinite() || !(dec >= 0.0)) {
      std::ostringstream msg;
      msg << "lmi barrier: Newton direction is not a descent direction (decrement " << dec
          << ", tau " << tau << ")";
      throw ConvergenceError(msg.str());
    }

    // Damped step for the self-concordant obj / tau + barrier keeps z1 inside
    // the Dikin ellipsoid.
    const double lambda = std::sqrt(std::max(dec, 0.0) / tau);
    double t = lambda > 0.25 ? 1.0 / (1.0 + lambda) : 1.0;
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      const Vec z1 = z + t * dz;
      const double b1 = bp.value(z1);
      if (std::isfinite(b1)) {
        const double phi1 = obj(z1, nullptr, nullptr) + tau * b1;
        if (phi1 <= phi0 - 0.25 * t * dec) {
          z = z1;
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) break;
    ++res.steps;
    if (stop && stop(z)) {
      res.stopped_early = true;
      break;
    }
  }
  return res;
}

void require_lmi_dims(const std::vector<Mat>& fs, const Mat& G) {
  if (fs.empty()) throw ValidationError("lmi: at least one state matrix is required");
  const Index n = fs.front().rows();
  for (const Mat& F : fs) {
    require_square(F, "lmi F");
    require_finite(F, "lmi F");
    if (F.rows() != n) throw ValidationError("lmi: state matrices differ in dimension");
  }
  if (G.rows() != n) throw ValidationError("lmi: G must have n rows");
  require_finite(G, "lmi G");
}

// P = A P A' + I scaled to trace n, or nullopt when A is not Schur stable.
std::optional<Mat> dual_lyapunov(const Mat& A) {
  if (!(spectral_radius(A) < 1.0)) return std::nullopt;
  const Index n = A.rows();
  const Mat lhs = Mat::Identity(n * n, n * n) - kron(A, A);
  Mat P;
  try {
    P = symmetrize(unvec(solve_linear(lhs, vec(Mat::Identity(n, n))), n, n));
  } catch (const SingularMatrixError&) {
    return std::nullopt;
  }
  if (!P.allFinite()) return std::nullopt;
  return Mat(P * (static_cast<double>(n) / P.trace()));
}

// Dual certificate against M(P, C) > 0 for the closed loop A (G = 0, D = 0):
// Z = Re(u u^H) with u = [a; -conj(lambda) a], a a left eigenvector of A for
// |lambda| >= 1. Then Z >= 0, Z12' A + Z22 = 0 and Z22 - Z11 >= 0, so
// <M(P, C), Z> = -tr(P (Z22 - Z11)) <= 0 for every P > 0. Checked numerically.
bool infeasibility_certificate(const Mat& A) {
  const Index n = A.rows();
  Eigen::EigenSolver<Mat> es(A.transpose());
  if (es.info() != Eigen::Success) return false;
  Index k = 0;
  es.eigenvalues().cwiseAbs().maxCoeff(&k);
  const std::complex<double> lambda = es.eigenvalues()(k);
  if (!(std::abs(lambda) >= 1.0)) return false;
  Eigen::VectorXcd u(2 * n);
  const Eigen::VectorXcd a = es.eigenvectors().col(k).normalized().conjugate();
  u.head(n) = a;
  u.tail(n) = -std::conj(lambda) * a;
  const Mat Z = (u * u.adjoint()).real();
  const Mat Z11 = Z.topLeftCorner(n, n), Z12 = Z.topRightCorner(n, n), Z22 = Z.bottomRightCorner(n, n);
  const double tol = 1e-10 * (1.0 + Z.norm()) * (1.0 + A.norm());
  return (Z12.transpose() * A + Z22).norm() <= tol && min_eigenvalue(Z) >= -tol &&
         min_eigenvalue(Z22 - Z11) >= -tol && Z.norm() > 0.5;
}

// Lowest eigenvalue of M_i - xi I over the scenarios; index -1 when all hold.
int most_violated(const LmiCertificate& cert, const std::vector<Mat>& fs, const Mat& G) {
  int worst = -1;
  double low = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (certificate_holds(cert, fs[i], G)) continue;
    const double e = min_eigenvalue(lmi_block(fs[i], G, symmetrize(cert.P), cert.C, cert.D)) - cert.xi;
    if (worst < 0 || e < low) {
      worst = static_cast<int>(i);
      low = e;
    }
  }
  return worst;
}

std::vector<Mat> pick(const std::vector<Mat>& fs, const std::vector<int>& idx) {
  std::vector<Mat> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(fs[static_cast<std::size_t>(i)]);
  return out;
}

// Largest-margin (P, C) for the closed loops with D = K C tied, stopped once
// the margin is within a factor two of optimal, then scaled so the xi-shifted
// LMI holds. Empty when the slack bound proves infeasibility.
std::optional<LmiCertificate> tied_certificate(const std::vector<Mat>& closed, const Mat& K, double xi,
                                               const Mat& P0, const Mat& C0, const BarrierOptions& opts,
                                               int& steps) {
  const Index n = K.cols();
  const Mat none(0, n);
  const double omega = 100.0 * static_cast<double>(n * n) + 4.0 * C0.squaredNorm();
  BarrierProblem bp(closed, Mat(n, 0), 0.0, true, omega);
  const Index js = bp.nv() - 1;
  Vec z = bp.pack(P0 * (static_cast<double>(n) / P0.trace()), C0 * (static_cast<double>(n) / P0.trace()),
                  none, 0.0);
  z(js) = bp.shifted_min_eigenvalue(z) - 1.0;
  const ObjectiveFn obj = [js](const Vec& v, Vec* g, Mat* /*h*/) {
    if (g) (*g)(js) = -1.0;
    return -v(js);
  };
  const double deg = bp.degrees();
  bool ok = false;
  for (double tau = opts.tau_start;; tau *= opts.tau_factor) {
    steps += center(bp, z, tau, obj, opts, {}).steps;
    if (z(js) + tau * deg < 0.0) return std::nullopt;
    if (z(js) > 0.0 && tau * deg <= z(js)) {
      ok = true;
      break;
    }
    if (tau < opts.tau_end) break;
  }
  if (!ok && !(z(js) > 0.0)) return std::nullopt;
  Mat P, C, D;
  double slack;
  bp.unpack(z, P, C, D, slack);
  const double scale = std::max(1.0, 2.0 * xi / slack);
  return LmiCertificate{scale * symmetrize(P), scale * C, K * (scale * C), xi};
}

}  // namespace

C2Result c2_solve(const Mat& K, const std::vector<Mat>& fs, const Mat& G, double xi,
                  const std::optional<LmiCertificate>& warm, const BarrierOptions& opts,
                  const std::vector<int>& working) {
  require_lmi_dims(fs, G);
  if (!(xi > 0.0)) throw ValidationError("c2_solve: xi must be positive");
  const Index n = fs.front().rows();
  const Index m = G.cols();
  if (K.rows() != m || K.cols() != n) throw ValidationError("c2_solve: K must be m x n");
  require_finite(K, "c2_solve K");
  const int count = static_cast<int>(fs.size());

  std::set<int> influence;
  std::vector<int> work;
  for (int i : working) {
    if (i >= 0 && i < count && std::find(work.begin(), work.end(), i) == work.end()) work.push_back(i);
  }
  auto done = [&](C2Result r) {
    influence.insert(work.begin(), work.end());
    r.working = work;
    r.influencing.assign(influence.begin(), influence.end());
    return r;
  };
  auto exact = [&](const LmiCertificate& c) {
    C2Result r;
    r.cert = {symmetrize(c.P), c.C, K * c.C, xi};
    r.residual = 0.0;
    r.exact = true;
    return r;
  };

  // A certificate from the previous call that still works with D = K C.
  if (warm) {
    const LmiCertificate c{warm->P, warm->C, K * warm->C, xi};
    bool all = true;
    for (int i = 0; i < count; ++i) {
      if (!certificate_holds(c, fs[static_cast<std::size_t>(i)], G)) {
        all = false;
        influence.insert(i);
      }
    }
    if (all) return done(exact(c));
  }

  int steps = 0;
  std::vector<Mat> closed;
  std::vector<double> rho;
  for (const Mat& F : fs) {
    closed.push_back(F + G * K);
    rho.push_back(spectral_radius(closed.back()));
  }
  std::vector<int> unstable;
  for (int i = 0; i < count; ++i) {
    if (!(rho[static_cast<std::size_t>(i)] < 1.0)) unstable.push_back(i);
  }
  if (work.empty()) {
    const int top = static_cast<int>(std::max_element(rho.begin(), rho.end()) - rho.begin());
    work.push_back(top);
  }

  if (unstable.empty()) {
    // Exact certificates exist only with a common Lyapunov-type certificate.
    // For one plant the closed-loop Lyapunov solution with C = P keeps C well
    // scaled.
    if (count == 1) {
      if (const auto P = dual_lyapunov(closed.front())) {
        const LmiCertificate c{*P, *P, K * *P, xi};
        if (certificate_holds(c, fs.front(), G)) {
          C2Result r = exact(c);
          return done(r);
        }
      }
    }
    Mat P0 = Mat::Identity(n, n);
    Mat C0 = P0;
    if (warm && warm->P.trace() > 0.0) {
      P0 = warm->P;
      C0 = warm->C;
    }
    while (true) {
      const auto c = tied_certificate(pick(closed, work), K, xi, P0, C0, opts, steps);
      if (!c) break;
      const int j = most_violated(*c, fs, G);
      if (j < 0) {
        C2Result r = exact(*c);
        r.newton_steps = steps;
        return done(r);
      }
      work.push_back(j);
      P0 = c->P;
      C0 = c->C;
    }
  } else {
    influence.insert(unstable.begin(), unstable.end());
  }

  // No exact certificate: minimize the residual over the working set.
  double omega = 100.0 * static_cast<double>(n * n) * (1.0 + K.squaredNorm());
  if (warm) omega = std::max(omega, 4.0 * (warm->C.squaredNorm() + warm->D.squaredNorm()));
  const Index co_len = n * n;
  const Mat kron_k = kron(Mat::Identity(n, n), K);  // vec(K C) = (I (x) K) vec(C)
  const Mat obj_hess_cc = 2.0 * kron_k.transpose() * kron_k;
  C2Result out;
  while (true) {
    const std::vector<Mat> fw = pick(fs, work);
    BarrierProblem main(fw, G, xi, false, omega);
    Vec z;
    if (warm) {
      const Vec zw = main.pack(warm->P, warm->C, warm->D, 0.0);
      if (std::isfinite(main.value(zw))) z = zw;
    }
    if (z.size() == 0) {
      BarrierProblem phase1(fw, G, xi, true, omega);
      const Mat I = Mat::Identity(n, n);
      Vec z1 = phase1.pack(I, I, K, 0.0);
      const Index js = phase1.nv() - 1;
      z1(js) = phase1.shifted_min_eigenvalue(z1) - 1.0;
      const ObjectiveFn obj = [js](const Vec& v, Vec* g, Mat* /*h*/) {
        if (g) (*g)(js) = -1.0;
        return -v(js);
      };
      bool found = false;
      for (double tau = opts.tau_start;; tau *= opts.tau_factor) {
        const CenterResult cr =
            center(phase1, z1, tau, obj, opts, [js](const Vec& v) { return v(js) > 0.0; });
        steps += cr.steps;
        if (z1(js) > 0.0) {
          found = true;
          break;
        }
        if (z1(js) + tau * phase1.degrees() < 0.0) {
          throw ConvergenceError("c2_solve: shifted LMI reported infeasible for every (P, C, D); slack " +
                                 std::to_string(z1(js)));
        }
        if (tau < opts.tau_end) break;
      }
      if (!found) throw ConvergenceError("c2_solve: no strictly feasible point found");
      z = z1.head(main.nv());
    }

    const Index co = main.c_offset();
    const Index dof = main.d_offset();
    const ObjectiveFn obj = [&](const Vec& v, Vec* g, Mat* h) {
      const Vec c = v.segment(co, co_len);
      const Vec d = v.segment(dof, m * n);
      const Vec r = kron_k * c - d;
      if (g) {
        g->segment(co, co_len) += 2.0 * kron_k.transpose() * r;
        g->segment(dof, m * n) -= 2.0 * r;
      }
      if (h) {
        h->block(co, co, co_len, co_len) += obj_hess_cc;
        h->block(co, dof, co_len, m * n) -= 2.0 * kron_k.transpose();
        h->block(dof, co, m * n, co_len) -= 2.0 * kron_k;
        h->block(dof, dof, m * n, m * n).diagonal().array() += 2.0;
      }
      return r.squaredNorm();
    };
    for (double tau = opts.tau_start; tau >= opts.tau_end * (1.0 - 1e-12); tau *= opts.tau_factor) {
      steps += center(main, z, tau, obj, opts, {}).steps;
    }

    Mat P, C, D;
    double s;
    main.unpack(z, P, C, D, s);
    out = C2Result{};
    out.cert = {symmetrize(P), C, D, xi};
    out.residual = (K * C - D).norm();
    const int j = most_violated(out.cert, fs, G);
    if (j < 0) break;
    work.push_back(j);
  }
  const LmiCertificate snapped{out.cert.P, out.cert.C, K * out.cert.C, xi};
  if (most_violated(snapped, fs, G) < 0) out = exact(snapped);
  out.newton_steps = steps;
  if (warm && most_violated(*warm, fs, G) < 0) {
    const double warm_residual = (K * warm->C - warm->D).norm();
    if (warm_residual <= out.residual) {
      C2Result kept;
      kept.cert = *warm;
      kept.residual = warm_residual;
      kept.kept_warm = true;
      kept.newton_steps = steps;
      return done(kept);
    }
  }
  return done(out);
}

C2Result c2_solve(const Mat& K, const Mat& F, const Mat& G, double xi, const BarrierOptions& opts) {
  return c2_solve(K, std::vector<Mat>{F}, G, xi, std::nullopt, opts, {});
}

LmiVerdict lyapunov_lmi_check(const Mat& F, const Mat& G, const Mat& K, double xi,
                              const BarrierOptions& opts) {
  require_lmi_dims({F}, G);
  const Index n = F.rows();
  if (K.rows() != G.cols() || K.cols() != n) throw ValidationError("lyapunov_lmi_check: K must be m x n");
  require_finite(K, "lyapunov_lmi_check K");
  const Mat FK = F + G * K;
  const Mat I = Mat::Identity(n, n);
  const Mat none(0, n);
  BarrierProblem bp({FK}, Mat(n, 0), 0.0, true, 100.0 * static_cast<double>(n * n));
  const Index js = bp.nv() - 1;

  LmiVerdict verdict;
  // Scale a strictly feasible (P, C) so the xi-shifted certificate holds.
  auto try_certificate = [&](const Mat& P, const Mat& C) {
    const double lmin = min_eigenvalue(lmi_block(FK, Mat(n, 0), P, C, none));
    if (!(lmin > 0.0)) return false;
    const double scale = std::max(1.0, 2.0 * xi / lmin);
    LmiCertificate cert{scale * symmetrize(P), scale * C, K * (scale * C), xi};
    if (!certificate_holds(cert, F, G)) return false;
    verdict.feasible = true;
    verdict.margin = lmin;
    verdict.certificate = std::move(cert);
    return true;
  };

  if (try_certificate(I, I)) return verdict;
  if (infeasibility_certificate(FK)) return verdict;

  Vec z = bp.pack(I, I, none, 0.0);
  z(js) = bp.shifted_min_eigenvalue(z) - 1.0;
  const ObjectiveFn obj = [js](const Vec& v, Vec* g, Mat* /*h*/) {
    if (g) (*g)(js) = -1.0;
    return -v(js);
  };
  for (double tau = opts.tau_start;; tau *= opts.tau_factor) {
    const CenterResult cr = center(bp, z, tau, obj, opts, [js](const Vec& v) { return v(js) > 0.0; });
    verdict.newton_steps += cr.steps;
    verdict.margin = z(js);
    if (z(js) > 0.0) {
      Mat P, C, D;
      double s;
      bp.unpack(z, P, C, D, s);
      if (try_certificate(P, C)) return verdict;
    }
    if (z(js) + tau * bp.degrees() < 0.0) {
      verdict.feasible = false;
      return verdict;
    }
    if (tau < opts.tau_end) break;
  }
  std::ostringstream msg;
  msg << "lyapunov_lmi_check: undecided, best slack " << z(js) << " (spectral radius "
      << spectral_radius(FK) << ")";
  throw ConvergenceError(msg.str());
}

std::optional<BarrierDerivatives> lmi_barrier_derivatives(const std::vector<Mat>& fs, const Mat& G,
                                                          double xi, const Mat& P, const Mat& C,
                                                          const Mat& D, Execution execution) {
  require_lmi_dims(fs, G);
  BarrierProblem bp(fs, G, xi, false, 0.0);
  BarrierDerivatives out;
  if (!bp.derivatives(bp.pack(P, C, D, 0.0), out.value, out.gradient, out.hessian, execution)) {
    return std::nullopt;
  }
  return out;
}

}  // namespace slqr
