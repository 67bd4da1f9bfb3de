#include "slqr/lqr.hpp"

#include <string>

#include <Eigen/SparseLU>

#include "slqr/errors.hpp"

namespace slqr {

void LtiSystem::validate() const {
  require_square(F, "F");
  if (F.rows() < 1) throw ValidationError("F: empty state matrix");
  if (G.rows() != F.rows()) throw ValidationError("G: row count must match F");
  if (G.cols() < 1) throw ValidationError("G: at least one input required");
  if (x0.size() != F.rows()) throw ValidationError("x0: length must match F");
  require_finite(F, "F");
  require_finite(G, "G");
  require_finite(x0, "x0");
}

void CostSpec::validate(Index n, Index m) const {
  if (horizon < 1) throw ValidationError("horizon must be a positive integer");
  if (Q.rows() != n || Q.cols() != n) throw ValidationError("Q: expected n x n");
  if (S.rows() != n || S.cols() != n) throw ValidationError("S: expected n x n");
  if (R.rows() != m || R.cols() != m) throw ValidationError("R: expected m x m");
  require_finite(Q, "Q");
  require_finite(R, "R");
  require_finite(S, "S");
  require_symmetric(Q, "Q");
  require_symmetric(R, "R");
  require_symmetric(S, "S");
  if (!is_psd(Q)) throw ValidationError("Q must be positive semidefinite");
  if (!is_psd(S)) throw ValidationError("S must be positive semidefinite");
  const double r_shift = 1e-10 * std::max(1.0, R.cwiseAbs().maxCoeff());
  if (!is_psd(R, r_shift)) throw ValidationError("R must be positive definite");
}

void validate(const LtiSystem& sys, const CostSpec& cost) {
  sys.validate();
  cost.validate(sys.n(), sys.m());
}

Vec InputSequence::stacked() const {
  if (u.empty()) return {};
  const Index m = u.front().size();
  Vec out(m * static_cast<Index>(u.size()));
  for (std::size_t t = 0; t < u.size(); ++t) out.segment(static_cast<Index>(t) * m, m) = u[t];
  return out;
}

InputSequence InputSequence::from_stacked(const Vec& u, Index m) {
  InputSequence seq;
  for (Index t = 0; t < u.size() / m; ++t) seq.u.push_back(u.segment(t * m, m));
  return seq;
}

P1Problem build_p1(const LtiSystem& sys, const CostSpec& cost) {
  validate(sys, cost);
  const Index n = sys.n(), m = sys.m();
  const int T = cost.horizon;

  // pow[k] = F^k, k = 0..T
  std::vector<Mat> pow(T + 1);
  pow[0] = Mat::Identity(n, n);
  for (int k = 1; k <= T; ++k) pow[k] = sys.F * pow[k - 1];
  std::vector<Mat> fg(T + 1);  // F^k G
  for (int k = 0; k <= T; ++k) fg[k] = pow[k] * sys.G;

  P1Problem p;
  p.B = Mat::Zero(m * T, m * T);
  p.a = Vec::Zero(m * T);

  // Block indices i, j run 1..T; u_{i-1} enters x_t through F^{t-i} G for t >= i.
  for (int i = 1; i <= T; ++i) {
    for (int j = 1; j <= T; ++j) {
      Mat blk = fg[T - i].transpose() * cost.S * fg[T - j];
      if (i == j) blk += cost.R;
      if (i <= T - 1 && j <= T - 1) {
        for (int t = std::max(i, j); t <= T - 1; ++t) {
          blk += fg[t - i].transpose() * cost.Q * fg[t - j];
        }
      }
      p.B.block((i - 1) * m, (j - 1) * m, m, m) = blk;
    }
    Vec ai = fg[T - i].transpose() * cost.S * (pow[T] * sys.x0);
    for (int t = i; t <= T - 1; ++t) ai += fg[t - i].transpose() * cost.Q * (pow[t] * sys.x0);
    p.a.segment((i - 1) * m, m) = ai;
  }
  p.B = symmetrize(p.B);

  double c = 0.0;
  for (int t = 0; t < T; ++t) {
    const Vec xt = pow[t] * sys.x0;
    c += xt.dot(cost.Q * xt);
  }
  const Vec xT = pow[T] * sys.x0;
  p.constant = c + xT.dot(cost.S * xT);
  return p;
}

InputSequence solve_p1(const LtiSystem& sys, const CostSpec& cost) {
  const P1Problem p = build_p1(sys, cost);
  const Vec u = -solve_linear(p.B, p.a);
  return InputSequence::from_stacked(u, sys.m());
}

P2Problem build_p2(const LtiSystem& sys, const CostSpec& cost) {
  validate(sys, cost);
  const Index n = sys.n(), m = sys.m();
  const int T = cost.horizon;
  P2Problem p;
  p.A1 = Mat::Identity(n * (T + 1), n * (T + 1));
  p.A2 = Mat::Zero(n * (T + 1), m * T);
  for (int t = 0; t < T; ++t) {
    p.A1.block((t + 1) * n, t * n, n, n) = -sys.F;
    p.A2.block((t + 1) * n, t * m, n, m) = -sys.G;
  }
  p.b = Vec::Zero(n * (T + 1));
  p.b.head(n) = sys.x0;
  p.Qbar = Mat::Zero(n * (T + 1), n * (T + 1));
  for (int t = 0; t < T; ++t) p.Qbar.block(t * n, t * n, n, n) = cost.Q;
  p.Qbar.block(T * n, T * n, n, n) = cost.S;
  p.Rbar = kron(Mat::Identity(T, T), cost.R);
  return p;
}

P2Solution solve_p2(const LtiSystem& sys, const CostSpec& cost) {
  validate(sys, cost);
  const Index n = sys.n(), m = sys.m();
  const int T = cost.horizon;

  // Unknowns per step t < T: [x_t, lambda_t, u_t]; final step: [x_T, lambda_T].
  const Index step = 2 * n + m;
  const Index dim = step * T + 2 * n;
  auto xi = [&](int t) { return step * t; };
  auto li = [&](int t) { return step * t + n; };
  auto ui = [&](int t) { return step * t + 2 * n; };

  std::vector<Eigen::Triplet<double>> trip;
  auto add_block = [&trip](Index r0, Index c0, const Mat& blk, double scale) {
    for (Index j = 0; j < blk.cols(); ++j) {
      for (Index i = 0; i < blk.rows(); ++i) {
        if (blk(i, j) != 0.0) trip.emplace_back(r0 + i, c0 + j, scale * blk(i, j));
      }
    }
  };
  const Mat In = Mat::Identity(n, n);
  Vec rhs = Vec::Zero(dim);

  // Row ordering mirrors the unknowns: the stationarity row for x_t sits at
  // xi(t), the dynamics row defining x_t at li(t), the input row at ui(t).
  for (int t = 0; t <= T; ++t) {
    const Mat& wx = (t < T) ? cost.Q : cost.S;
    // 2 W x_t + lambda_t - F' lambda_{t+1} = 0
    add_block(xi(t), xi(t), wx, 2.0);
    add_block(xi(t), li(t), In, 1.0);
    if (t < T) add_block(xi(t), li(t + 1), sys.F.transpose(), -1.0);
    // x_0 = x0;  x_t - F x_{t-1} - G u_{t-1} = 0
    add_block(li(t), xi(t), In, 1.0);
    if (t == 0) {
      rhs.segment(li(0), n) = sys.x0;
    } else {
      add_block(li(t), xi(t - 1), sys.F, -1.0);
      add_block(li(t), ui(t - 1), sys.G, -1.0);
    }
    // 2 R u_t - G' lambda_{t+1} = 0
    if (t < T) {
      add_block(ui(t), ui(t), cost.R, 2.0);
      add_block(ui(t), li(t + 1), sys.G.transpose(), -1.0);
    }
  }

  Eigen::SparseMatrix<double> kkt(dim, dim);
  kkt.setFromTriplets(trip.begin(), trip.end());
  kkt.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(kkt);
  if (lu.info() != Eigen::Success) {
    throw SingularMatrixError("solve_p2: KKT system is singular");
  }
  const Vec z = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !z.allFinite()) {
    throw SingularMatrixError("solve_p2: KKT solve failed");
  }

  P2Solution out;
  out.x.resize(n * (T + 1));
  out.lambda.resize(n * (T + 1));
  for (int t = 0; t <= T; ++t) {
    out.x.segment(t * n, n) = z.segment(xi(t), n);
    out.lambda.segment(t * n, n) = z.segment(li(t), n);
    if (t < T) out.inputs.u.push_back(z.segment(ui(t), m));
  }
  return out;
}

Mat riccati_step(const Mat& m_next, const Mat& F, const Mat& G, const Mat& Q, const Mat& R,
                 Mat* gain) {
  const Mat mg = m_next * G;
  const Mat h = R + G.transpose() * mg;
  const Mat gmf = mg.transpose() * F;  // G' M F
  const Mat k = -solve_linear(symmetrize(h), gmf);
  // Joseph form: a sum of PSD terms, free of the cancellation in F'MF - F'MG H^{-1} G'MF.
  const Mat a = F + G * k;
  Mat m = Q + k.transpose() * R * k + a.transpose() * m_next * a;
  if (gain != nullptr) *gain = k;
  return symmetrize(m);
}

FeedbackSequence dre_sweep(const LtiSystem& sys, const CostSpec& cost) {
  validate(sys, cost);
  const int T = cost.horizon;
  FeedbackSequence seq;
  seq.gains.resize(T);
  seq.values.resize(T + 1);
  seq.values[T] = cost.S;
  for (int t = T - 1; t >= 0; --t) {
    seq.values[t] = riccati_step(seq.values[t + 1], sys.F, sys.G, cost.Q, cost.R, &seq.gains[t]);
  }
  return seq;
}

P4Solution solve_p4(const LtiSystem& sys, const CostSpec& cost) {
  const FeedbackSequence seq = dre_sweep(sys, cost);
  const int T = cost.horizon;
  P4Solution out;
  out.states.reserve(T + 1);
  out.states.push_back(sys.x0);
  for (int t = 0; t < T; ++t) {
    // u_t = -(R + G'P_{t+1}G)^{-1} G'P_{t+1}F x_t
    Vec u = seq.gains[t] * out.states.back();
    out.states.push_back(sys.F * out.states.back() + sys.G * u);
    out.inputs.u.push_back(std::move(u));
  }
  out.adjoint.lambda.reserve(T + 1);
  for (int t = 0; t <= T; ++t) {
    out.adjoint.lambda.push_back(-2.0 * seq.values[t] * out.states[t]);
  }
  return out;
}

double optimal_cost(const LtiSystem& sys, const CostSpec& cost) {
  const FeedbackSequence seq = dre_sweep(sys, cost);
  return sys.x0.dot(seq.values.front() * sys.x0);
}

namespace {

template <typename InputAt>
Trajectory simulate(const LtiSystem& sys, const CostSpec& cost, InputAt&& input_at) {
  const int T = cost.horizon;
  Trajectory tr;
  tr.states.reserve(T + 1);
  tr.states.push_back(sys.x0);
  double j = 0.0;
  for (int t = 0; t < T; ++t) {
    const Vec& x = tr.states.back();
    const Vec u = input_at(t, x);
    j += x.dot(cost.Q * x) + u.dot(cost.R * u);
    tr.states.push_back(sys.F * x + sys.G * u);
  }
  j += tr.states.back().dot(cost.S * tr.states.back());
  tr.cost = j;
  return tr;
}

}  // namespace

Trajectory rollout(const LtiSystem& sys, const CostSpec& cost, const InputSequence& inputs) {
  validate(sys, cost);
  if (static_cast<int>(inputs.u.size()) != cost.horizon) {
    throw ValidationError("rollout: input sequence length must equal the horizon");
  }
  for (const auto& u : inputs.u) {
    if (u.size() != sys.m()) throw ValidationError("rollout: input dimension mismatch");
  }
  return simulate(sys, cost, [&](int t, const Vec&) { return inputs.u[t]; });
}

Trajectory rollout(const LtiSystem& sys, const CostSpec& cost, const FeedbackSequence& policy) {
  validate(sys, cost);
  if (static_cast<int>(policy.gains.size()) != cost.horizon) {
    throw ValidationError("rollout: gain sequence length must equal the horizon");
  }
  return simulate(sys, cost, [&](int t, const Vec& x) { return Vec(policy.gains[t] * x); });
}

Trajectory rollout(const LtiSystem& sys, const CostSpec& cost, const Mat& gain) {
  validate(sys, cost);
  if (gain.rows() != sys.m() || gain.cols() != sys.n()) {
    throw ValidationError("rollout: gain must be m x n");
  }
  return simulate(sys, cost, [&](int, const Vec& x) { return Vec(gain * x); });
}

double closed_loop_cost(const Mat& F, const Mat& G, const Vec& x0, const CostSpec& cost,
                        const Mat& gain) {
  const Mat fk = F + G * gain;
  const Mat qk = cost.Q + gain.transpose() * cost.R * gain;
  Vec x = x0;
  Vec next(x0.size());
  double j = 0.0;
  for (int t = 0; t < cost.horizon; ++t) {
    j += x.dot(qk * x);
    next.noalias() = fk * x;
    x.swap(next);
  }
  return j + x.dot(cost.S * x);
}

}  // namespace slqr
