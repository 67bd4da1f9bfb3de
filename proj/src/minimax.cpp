#include "slqr/minimax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "slqr/errors.hpp"

namespace slqr {

namespace {

struct Eval {
  Vec values;
  Mat grads;
  double max = 0.0;
  int argmax = 0;
  bool finite = false;
};

Eval evaluate(const MinimaxTerms& terms, int count, Index dim, const Vec& x) {
  Eval e;
  e.values = Vec::Zero(count);
  e.grads = Mat::Zero(dim, count);
  terms(x, e.values, e.grads);
  e.finite = e.values.allFinite() && e.grads.allFinite();
  e.max = e.finite ? e.values.maxCoeff(&e.argmax) : std::numeric_limits<double>::infinity();
  return e;
}

// Scaled so the first step moves x by about a tenth of its size.
Mat initial_model(const Eval& e, const Vec& x, const Mat* h0) {
  const Index dim = x.size();
  if (h0 && h0->rows() == dim && h0->cols() == dim && h0->allFinite()) return *h0;
  const double g = e.grads.col(e.argmax).norm();
  const double scale = std::max(1.0, g / (0.1 * std::max(1.0, x.norm())));
  return scale * Mat::Identity(dim, dim);
}

}  // namespace

MinimaxStep minimax_qp(const Vec& values, const Mat& grads, const Mat& B) {
  const Index N = values.size();
  if (N < 1 || grads.cols() != N || B.rows() != grads.rows() || B.cols() != grads.rows()) {
    throw ValidationError("minimax_qp: inconsistent sizes");
  }
  Eigen::LLT<Mat> llt(B);
  if (llt.info() != Eigen::Success) throw SingularMatrixError("minimax_qp: model is not positive definite");
  // Dual: min over the simplex of lam'Q lam/2 - v'lam, Q = G' B^-1 G.
  const Mat BiG = llt.solve(grads);
  const Mat Q = symmetrize(grads.transpose() * BiG);
  // Dual with both terms scaled to order one.
  const double scale = std::max({1e-300, values.cwiseAbs().maxCoeff(), Q.diagonal().maxCoeff()});
  const Mat Qs = Q / scale;
  const Vec vs = values / scale;
  const double tol = 1e-13;

  Vec lam = Vec::Zero(N);
  int start = 0;
  (Vec(0.5 * Qs.diagonal() - vs)).minCoeff(&start);
  lam(start) = 1.0;
  std::vector<Index> work{start};

  const int max_steps = 50 * static_cast<int>(N) + 100;
  for (int step = 0; step < max_steps; ++step) {
    const Index k = static_cast<Index>(work.size());
    Vec p = Vec::Zero(k);  // move within the working face
    bool to_target = true;
    if (k > 1) {
      Mat Qw(k, k);
      Vec r(k);
      for (Index a = 0; a < k; ++a) {
        for (Index b = 0; b < k; ++b) Qw(a, b) = Qs(work[a], work[b]);
      }
      for (Index a = 0; a < k; ++a) r(a) = (Qs.row(work[a]) * lam)(0) - vs(work[a]);
      // Orthonormal basis of the sum-zero directions.
      const Mat Z = Eigen::HouseholderQR<Mat>(Mat::Ones(k, 1)).householderQ() * Mat::Identity(k, k);
      const Mat Zr = Z.rightCols(k - 1);
      Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(Zr.transpose() * Qw * Zr));
      const Vec& ev = es.eigenvalues();
      if (ev(0) > 1e-12 * std::max(1.0, ev(k - 2))) {
        p = -Zr * es.eigenvectors() * (ev.cwiseInverse().asDiagonal() *
                                       (es.eigenvectors().transpose() * (Zr.transpose() * r)));
      } else {
        p = Zr * es.eigenvectors().col(0);
        if (r.dot(p) > 0.0) p = -p;
        to_target = false;
      }
    }

    // Ratio test against lam >= 0.
    double t = to_target ? 1.0 : std::numeric_limits<double>::infinity();
    Index blocking = -1;
    for (Index a = 0; a < k; ++a) {
      if (p(a) < 0.0) {
        const double ta = -lam(work[a]) / p(a);
        if (ta < t) {
          t = ta;
          blocking = a;
        }
      }
    }
    if (!std::isfinite(t)) throw ConvergenceError("minimax_qp: unbounded face direction");
    for (Index a = 0; a < k; ++a) lam(work[a]) = std::max(0.0, lam(work[a]) + t * p(a));
    if (blocking >= 0) {
      lam(work[blocking]) = 0.0;
      work.erase(work.begin() + blocking);
      continue;
    }

    // Face optimum reached; price the remaining vertices.
    const Vec grad = Qs * lam - vs;
    double nu = 0.0;
    for (Index a = 0; a < k; ++a) nu += grad(work[a]);
    nu /= static_cast<double>(k);
    Index enter = -1;
    double best = -tol;
    for (Index i = 0; i < N; ++i) {
      if (std::find(work.begin(), work.end(), i) != work.end()) continue;
      const double reduced = grad(i) - nu;
      if (reduced < best) {
        best = reduced;
        enter = i;
      }
    }
    if (enter < 0) {
      MinimaxStep out;
      lam /= lam.sum();
      out.multipliers = lam;
      out.d = -(BiG * lam);
      out.model = (values + grads.transpose() * out.d).maxCoeff() + 0.5 * out.d.dot(B * out.d);
      return out;
    }
    work.push_back(enter);
  }
  throw ConvergenceError("minimax_qp: active-set iteration limit reached");
}

MinimaxResult minimax_sqp(int count, const MinimaxTerms& terms, const Vec& x0,
                          const MinimaxOptions& opts, const Mat* hessian0) {
  if (count < 1) throw ValidationError("minimax_sqp: need at least one term");
  const Index dim = x0.size();
  std::set<int> influence;
  MinimaxResult res;
  res.x = x0;

  Eval cur = evaluate(terms, count, dim, x0);
  if (!cur.finite) throw ConvergenceError("minimax_sqp: terms are not finite at the start");
  influence.insert(cur.argmax);
  Mat B = initial_model(cur, x0, hessian0);
  bool fresh_model = hessian0 == nullptr;
  bool just_reset = false;
  int polish_left = 20;

  // Central-difference Hessian of sum_i lam_i f_i, eigenvalues made positive.
  auto newton_model = [&](const Vec& x, const Vec& lam) -> std::optional<Mat> {
    Mat H(dim, dim);
    for (Index j = 0; j < dim; ++j) {
      const double h = 6e-6 * std::max(1.0, std::abs(x(j)));
      Vec xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const Eval ep = evaluate(terms, count, dim, xp);
      const Eval em = evaluate(terms, count, dim, xm);
      if (!ep.finite || !em.finite) return std::nullopt;
      H.col(j) = (ep.grads - em.grads) * lam / (2.0 * h);
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(H));
    Vec ev = es.eigenvalues().cwiseAbs();
    const double floor = std::max(1e-300, 1e-10 * ev.maxCoeff());
    ev = ev.cwiseMax(floor);
    return Mat(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  };

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    MinimaxStep qp;
    try {
      qp = minimax_qp(cur.values, cur.grads, B);
      if (opts.newton) {
        if (auto H = newton_model(res.x, qp.multipliers)) {
          B = *H;
          qp = minimax_qp(cur.values, cur.grads, B);
        }
      }
    } catch (const Error&) {
      if (just_reset) break;
      B = initial_model(cur, res.x, nullptr);
      fresh_model = just_reset = true;
      continue;
    }
    for (Index i = 0; i < qp.multipliers.size(); ++i) {
      if (qp.multipliers(i) > 0.0) influence.insert(static_cast<int>(i));
    }
    res.multipliers = qp.multipliers;
    const Vec& d = qp.d;
    const double pred = cur.max - qp.model;
    const double scale = std::max(1.0, std::abs(cur.max));
    if (pred <= opts.tol * scale) {
      // The decrease is at roundoff level but the step may not be: keep taking
      // full steps while they do not increase the max beyond roundoff.
      if (d.norm() <= opts.step_tol * (1.0 + res.x.norm()) || polish_left == 0) {
        res.converged = true;
        break;
      }
      Eval trial = evaluate(terms, count, dim, res.x + d);
      if (trial.finite) influence.insert(trial.argmax);
      if (!trial.finite || trial.max > cur.max + 1e-15 * scale) {
        res.converged = true;
        break;
      }
      --polish_left;
      res.x += d;
      cur = std::move(trial);
      continue;
    }

    double t = 1.0;
    bool accepted = false;
    Eval trial;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, t *= 0.5) {
      trial = evaluate(terms, count, dim, res.x + t * d);
      if (trial.finite) influence.insert(trial.argmax);
      if (trial.finite && trial.max <= cur.max - opts.armijo_c * t * pred) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (just_reset || fresh_model || opts.newton) {
        res.converged = pred <= 1e3 * opts.tol * scale;
        break;
      }
      B = initial_model(cur, res.x, nullptr);
      fresh_model = just_reset = true;
      continue;
    }
    just_reset = false;

    const Vec s = t * d;
    const Vec y = (trial.grads - cur.grads) * qp.multipliers;
    res.x += s;
    cur = std::move(trial);
    if (opts.newton) continue;

    const double sy = s.dot(y);
    if (fresh_model && sy > 0.0) {
      B *= y.squaredNorm() / sy / B.diagonal().mean();
    }
    fresh_model = false;
    const Vec Bs = B * s;
    const double sBs = s.dot(Bs);
    if (sBs > 0.0 && std::isfinite(sBs)) {
      const double theta = sy >= 0.2 * sBs ? 1.0 : 0.8 * sBs / (sBs - sy);
      const Vec r = theta * y + (1.0 - theta) * Bs;
      const double sr = s.dot(r);
      if (sr > 0.0) {
        B += r * r.transpose() / sr - Bs * Bs.transpose() / sBs;
        B = 0.5 * (B + B.transpose());
      }
    }
  }
  res.value = cur.max;
  res.influencing.assign(influence.begin(), influence.end());
  res.hessian = B;
  return res;
}

}  // namespace slqr
