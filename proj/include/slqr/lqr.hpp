#pragma once

// Deterministic finite-horizon discrete-time LQR:
//
//   min_u  x_T' S x_T + sum_{t<T} (x_t' Q x_t + u_t' R u_t)
//   s.t.   x_{t+1} = F x_t + G u_t,  x_0 = x0
//
// solved four ways: the condensed input-only QP (P1), the sparse KKT system of
// the stacked problem (P2), the backward Riccati sweep (P3) and the
// Pontryagin/costate sweep (P4).

#include <vector>

#include "slqr/matrix_kernel.hpp"

namespace slqr {

struct LtiSystem {
  Mat F;   // n x n
  Mat G;   // n x m
  Vec x0;  // n

  [[nodiscard]] Index n() const { return F.rows(); }
  [[nodiscard]] Index m() const { return G.cols(); }
  void validate() const;
};

struct CostSpec {
  Mat Q;  // n x n, PSD
  Mat R;  // m x m, PD
  Mat S;  // n x n, PSD terminal weight
  int horizon = 1;

  void validate(Index n, Index m) const;
};

// Throws ValidationError on any dimension, finiteness or definiteness problem.
void validate(const LtiSystem& sys, const CostSpec& cost);

struct InputSequence {
  std::vector<Vec> u;  // u_0 .. u_{T-1}

  [[nodiscard]] Vec stacked() const;
  static InputSequence from_stacked(const Vec& u, Index m);
};

struct FeedbackSequence {
  std::vector<Mat> gains;   // K_0 .. K_{T-1}
  std::vector<Mat> values;  // M_0 .. M_T, values.back() == S
};

struct AdjointSequence {
  std::vector<Vec> lambda;  // lambda_0 .. lambda_T
};

struct Trajectory {
  std::vector<Vec> states;  // x_0 .. x_T
  double cost = 0.0;
};

// Condensed form: J(u) = u' B u + 2 a' u + constant.
struct P1Problem {
  Mat B;
  Vec a;
  double constant = 0.0;  // the u-independent part of the cost

  [[nodiscard]] double value(const Vec& u) const { return u.dot(B * u) + 2.0 * a.dot(u) + constant; }
};

struct P2Problem {
  Mat A1;    // n(T+1) x n(T+1), unit lower block-bidiagonal
  Mat A2;    // n(T+1) x mT
  Vec b;     // [x0; 0; ...]
  Mat Qbar;  // diag(I_T (x) Q, S)
  Mat Rbar;  // I_T (x) R
};

struct P2Solution {
  InputSequence inputs;
  Vec x;       // stacked states, n(T+1)
  Vec lambda;  // stacked multipliers, n(T+1)
};

struct P4Solution {
  InputSequence inputs;
  std::vector<Vec> states;
  AdjointSequence adjoint;
};

[[nodiscard]] P1Problem build_p1(const LtiSystem& sys, const CostSpec& cost);
[[nodiscard]] InputSequence solve_p1(const LtiSystem& sys, const CostSpec& cost);

[[nodiscard]] P2Problem build_p2(const LtiSystem& sys, const CostSpec& cost);
// Solves the KKT conditions of the stacked problem as one sparse banded
// system, ordering unknowns by time step.
[[nodiscard]] P2Solution solve_p2(const LtiSystem& sys, const CostSpec& cost);

// One backward Riccati step M_t = f(M_{t+1}); writes K_t into gain if given.
[[nodiscard]] Mat riccati_step(const Mat& m_next, const Mat& F, const Mat& G, const Mat& Q,
                               const Mat& R, Mat* gain = nullptr);
[[nodiscard]] FeedbackSequence dre_sweep(const LtiSystem& sys, const CostSpec& cost);
[[nodiscard]] P4Solution solve_p4(const LtiSystem& sys, const CostSpec& cost);

// x0' M_0 x0, the optimal finite-horizon cost.
[[nodiscard]] double optimal_cost(const LtiSystem& sys, const CostSpec& cost);

[[nodiscard]] Trajectory rollout(const LtiSystem& sys, const CostSpec& cost,
                                 const InputSequence& inputs);
[[nodiscard]] Trajectory rollout(const LtiSystem& sys, const CostSpec& cost,
                                 const FeedbackSequence& policy);
// Constant state feedback u_t = K x_t.
[[nodiscard]] Trajectory rollout(const LtiSystem& sys, const CostSpec& cost, const Mat& gain);

// Cost of the constant-gain closed loop without storing the trajectory.
[[nodiscard]] double closed_loop_cost(const Mat& F, const Mat& G, const Vec& x0,
                                      const CostSpec& cost, const Mat& gain);

}  // namespace slqr
