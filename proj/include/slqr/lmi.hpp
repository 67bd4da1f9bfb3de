#pragma once

// Lyapunov-type LMI for discrete-time state feedback,
//
//   M(P, C, D) = [ P            F C + G D   ]
//                [ (F C + G D)'  C + C' - P ]  >=  xi I,
//
// which is feasible with D = K C exactly when F + G K is Schur stable.
// Solved with a dense log-barrier Newton method on svec(P), vec(C), vec(D)
// under the normalization trace(P) = n and a large ball on (C, D).

#include <optional>
#include <vector>

#include "slqr/matrix_kernel.hpp"
#include "slqr/parallel.hpp"

namespace slqr {

struct LmiCertificate {
  Mat P, C, D;
  double xi = 1e-5;
};

[[nodiscard]] Mat lmi_block(const Mat& F, const Mat& G, const Mat& P, const Mat& C, const Mat& D);
// is_psd(M - xi I) for the stored matrices.
[[nodiscard]] bool certificate_holds(const LmiCertificate& cert, const Mat& F, const Mat& G);
// K = D C^{-1}.
[[nodiscard]] Mat certified_gain(const LmiCertificate& cert);

struct BarrierOptions {
  double tau_start = 1.0;
  double tau_end = 1e-8;
  double tau_factor = 0.2;
  int max_newton = 60;       // per barrier stage
  double newton_tol = 1e-11; // half squared Newton decrement
  int max_backtracks = 60;
  Execution execution = Execution::serial;
};

struct C2Result {
  LmiCertificate cert;
  double residual = 0.0;  // ||K C - D||_F
  int newton_steps = 0;
  bool exact = false;      // D == K C exactly
  bool kept_warm = false;  // previous iterate returned unchanged
  std::vector<int> working;  // scenarios whose LMIs entered a solve
  // Scenarios that could have changed the result: the working set plus those
  // whose check failed for the warm certificate or a stability test.
  std::vector<int> influencing;
};

// min ||K C - D||_F^2 over (P, C, D) subject to the shifted LMI for every F
// in `fs`. The LMIs enter through a working set, seeded with `working`, that
// grows by the most violated scenario until the result satisfies them all.
// A feasible warm start that does at least as well as the computed point is
// returned as is, so repeated calls never increase the residual.
[[nodiscard]] C2Result c2_solve(const Mat& K, const std::vector<Mat>& fs, const Mat& G, double xi,
                                const std::optional<LmiCertificate>& warm = std::nullopt,
                                const BarrierOptions& opts = {},
                                const std::vector<int>& working = {});
[[nodiscard]] C2Result c2_solve(const Mat& K, const Mat& F, const Mat& G, double xi,
                                const BarrierOptions& opts = {});

struct LmiVerdict {
  bool feasible = false;
  std::optional<LmiCertificate> certificate;
  double margin = 0.0;  // best slack found (positive iff a certificate exists)
  int newton_steps = 0;
};

// Searches (P, C) with D = K C tied. Throws ConvergenceError when neither a
// certificate nor a proof of infeasibility is reached.
[[nodiscard]] LmiVerdict lyapunov_lmi_check(const Mat& F, const Mat& G, const Mat& K,
                                            double xi = 1e-5, const BarrierOptions& opts = {});

// Barrier derivative assembly for the benchmark and tests: value, gradient and
// Hessian of -sum_i log det(M_i - xi I) at (P, C, D), evaluated with the
// requested execution policy. Returns false outside the domain.
struct BarrierDerivatives {
  double value = 0.0;
  Vec gradient;
  Mat hessian;
};
[[nodiscard]] std::optional<BarrierDerivatives> lmi_barrier_derivatives(
    const std::vector<Mat>& fs, const Mat& G, double xi, const Mat& P, const Mat& C, const Mat& D,
    Execution execution);

}  // namespace slqr
