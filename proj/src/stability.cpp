#include "slqr/stability.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/SVD>

#include "slqr/errors.hpp"
#include "slqr/minimax.hpp"
#include "slqr/rng.hpp"

namespace slqr {

std::string to_string(Method m) {
  switch (m) {
    case Method::s0: return "s0";
    case Method::s1: return "s1";
    case Method::s2: return "s2";
    case Method::sinf: return "sinf";
    case Method::classic: return "classic";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "s0") return Method::s0;
  if (name == "s1") return Method::s1;
  if (name == "s2") return Method::s2;
  if (name == "sinf") return Method::sinf;
  if (name == "classic") return Method::classic;
  throw ValidationError("unknown method '" + name + "' (expected s0, s1, s2, sinf or classic)");
}

void S0Config::validate() const {
  if (!(xi > 0.0)) throw ValidationError("s0: xi must be positive");
  if (!(mu > 0.0)) throw ValidationError("s0: mu must be positive");
  if (max_outer < 1) throw ValidationError("s0: max_outer must be at least 1");
  if (!(gain_tol > 0.0)) throw ValidationError("s0: gain_tol must be positive");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double finite_or_inf(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); }

}  // namespace

void refresh_metrics(StabilizedSolution& sol, const LtiSystem& sys, const CostSpec& cost) {
  if (sol.method == Method::classic) {
    sol.rho_closed = spectral_radius(sys.F + sys.G * sol.K);
    return;
  }
  const Mat FK = sys.F + sys.G * sol.K;
  sol.rho_closed = FK.allFinite() ? spectral_radius(FK) : std::numeric_limits<double>::infinity();
  sol.cost = finite_or_inf(closed_loop_cost(sys.F, sys.G, sys.x0, cost, sol.K));
}

ValueGradient closed_loop_value_gradient(const Mat& F, const Mat& G, const Vec& x0,
                                         const CostSpec& cost, const Mat& K) {
  const int T = cost.horizon;
  const Mat FK = F + G * K;
  const Mat W = cost.Q + K.transpose() * cost.R * K;
  std::vector<Vec> x(static_cast<std::size_t>(T + 1));
  x[0] = x0;
  double value = 0.0;
  for (int t = 0; t < T; ++t) {
    value += x[t].dot(W * x[t]);
    x[t + 1] = FK * x[t];
  }
  value += x[T].dot(cost.S * x[T]);

  ValueGradient out;
  out.value = value;
  out.gradient = Mat::Zero(K.rows(), K.cols());
  Vec lambda = -2.0 * cost.S * x[T];
  const Mat RK = cost.R * K;
  for (int t = T - 1; t >= 0; --t) {
    out.gradient += 2.0 * RK * x[t] * x[t].transpose() - G.transpose() * lambda * x[t].transpose();
    lambda = -2.0 * W * x[t] + FK.transpose() * lambda;
  }
  return out;
}

ValueGradient c1_value_and_gradient(const Mat& K, const Mat& C, const Mat& D, const LtiSystem& sys,
                                    const CostSpec& cost, double mu) {
  validate(sys, cost);
  if (!(mu > 0.0)) throw ValidationError("c1: mu must be positive");
  ValueGradient vg = closed_loop_value_gradient(sys.F, sys.G, sys.x0, cost, K);
  const Mat r = K * C - D;
  vg.value += r.squaredNorm() / (2.0 * mu);
  vg.gradient += r * C.transpose() / mu;
  return vg;
}

namespace {

// S0 alternation over one or more plants sharing G, x0 and the cost.
StabilizedSolution s0_core(const std::vector<Mat>& fs, const Mat& G, const Vec& x0,
                           const CostSpec& cost, const S0Config& cfg, std::uint64_t seed,
                           Execution ex, int* active_out, std::vector<int>* influence_out) {
  cfg.validate();
  const auto start = Clock::now();
  const Index n = fs.front().rows();
  const Index m = G.cols();
  Rng rng(seed);
  Mat K = rng.normal_matrix(m, n, cfg.init_scale);
  Mat C = Mat::Identity(n, n) + rng.normal_matrix(n, n, cfg.init_scale);
  Mat D = rng.normal_matrix(m, n, cfg.init_scale);
  const int count = static_cast<int>(fs.size());
  Mat model;  // quasi-Newton model carried across outer iterations
  std::set<int> influence;
  std::vector<int> working;

  auto max_value = [&](const Mat& gain) {
    return indexed_max(ex, count, [&](int i) {
      return finite_or_inf(closed_loop_cost(fs[static_cast<std::size_t>(i)], G, x0, cost, gain));
    });
  };

  StabilizedSolution sol;
  sol.method = Method::s0;
  std::optional<LmiCertificate> cert;
  int outer = 0;
  bool converged = false;
  for (outer = 1; outer <= cfg.max_outer; ++outer) {
    const Mat Cc = C;
    const Mat Dc = D;
    auto penalty = [&](const Mat& Kx, Mat* grad) {
      const Mat r = Kx * Cc - Dc;
      if (grad) *grad = r * Cc.transpose() / cfg.mu;
      return r.squaredNorm() / (2.0 * cfg.mu);
    };
    auto true_objective = [&](const Mat& Kx) { return max_value(Kx).value + penalty(Kx, nullptr); };
    Mat K_new;
    if (count == 1) {
      const ValueAndGradient fg = [&](const Vec& kv, Vec& grad) {
        const Mat Kx = unvec(kv, m, n);
        ValueGradient vg = closed_loop_value_gradient(fs.front(), G, x0, cost, Kx);
        if (!std::isfinite(vg.value)) {
          grad.setZero(kv.size());
          return std::numeric_limits<double>::infinity();
        }
        Mat pg;
        const double pen = penalty(Kx, &pg);
        grad = vec(vg.gradient + pg);
        return vg.value + pen;
      };
      K_new = unvec(lbfgs_minimize(fg, vec(K), cfg.lbfgs).x, m, n);
    } else {
      const MinimaxTerms terms = [&](const Vec& kv, Vec& values, Mat& grads) {
        const Mat Kx = unvec(kv, m, n);
        Mat pg;
        const double pen = penalty(Kx, &pg);
        const Vec pgv = vec(pg);
        for_each_index(ex, count, [&](int i) {
          const ValueGradient vg =
              closed_loop_value_gradient(fs[static_cast<std::size_t>(i)], G, x0, cost, Kx);
          values(i) = vg.value + pen;
          grads.col(i) = vec(vg.gradient) + pgv;
        });
      };
      const MinimaxResult mr =
          minimax_sqp(count, terms, vec(K), cfg.minimax, model.size() ? &model : nullptr);
      model = mr.hessian;
      influence.insert(mr.influencing.begin(), mr.influencing.end());
      K_new = unvec(mr.x, m, n);
    }
    const double c1_value = true_objective(K_new);
    if (cert) sol.objective_history.push_back(c1_value);

    const C2Result c2 = c2_solve(K_new, fs, G, cfg.xi, cert, cfg.barrier, working);
    working = c2.working;
    influence.insert(c2.influencing.begin(), c2.influencing.end());
    cert = c2.cert;
    C = c2.cert.C;
    D = c2.cert.D;
    sol.objective_history.push_back(max_value(K_new).value +
                                    c2.residual * c2.residual / (2.0 * cfg.mu));

    const double step = (K_new - K).norm();
    const double scale = 1.0 + K.norm();
    K = K_new;
    if (outer > 1 && step <= cfg.gain_tol * scale) {
      converged = true;
      break;
    }
  }

  sol.iterations = std::min(outer, cfg.max_outer);
  sol.converged = converged;
  sol.certificate = cert;
  // The certified gain; equals K whenever the last (C2) represented it exactly.
  Mat Kc = K;
  try {
    Kc = certified_gain(*cert);
  } catch (const SingularMatrixError&) {
  }
  sol.K = Kc.allFinite() ? Kc : K;
  const IndexedMax final_max = max_value(sol.K);
  sol.objective = final_max.value;
  if (active_out) *active_out = final_max.index;
  if (influence_out) {
    influence.insert(final_max.index);
    influence_out->assign(influence.begin(), influence.end());
  }
  sol.wall_ms = elapsed_ms(start);
  return sol;
}

}  // namespace

StabilizedSolution s0_solve(const LtiSystem& sys, const CostSpec& cost, const S0Config& cfg,
                            std::uint64_t seed) {
  validate(sys, cost);
  StabilizedSolution sol = s0_core({sys.F}, sys.G, sys.x0, cost, cfg, seed, Execution::serial, nullptr, nullptr);
  refresh_metrics(sol, sys, cost);
  return sol;
}

bool is_detectable(const Mat& F, const Mat& Q) {
  require_square(F, "is_detectable F");
  require_symmetric(Q, "is_detectable Q");
  const Index n = F.rows();
  const Mat Qh = psd_sqrt(Q);
  for (const auto& sigma : eigenvalues(F)) {
    if (std::abs(sigma) < 1.0 - 1e-9) continue;
    Eigen::MatrixXcd pbh(2 * n, n);
    pbh.topRows(n) = F.cast<std::complex<double>>();
    pbh.topRows(n).diagonal().array() -= sigma;
    pbh.bottomRows(n) = Qh.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pbh);
    const auto& sv = svd.singularValues();
    const double tol = 1e-9 * std::max(1.0, sv(0));
    if (sv(n - 1) <= tol) return false;
  }
  return true;
}

double are_residual(const Mat& M, const Mat& F, const Mat& G, const Mat& Q, const Mat& R) {
  return (M - riccati_step(M, F, G, Q, R)).norm();
}

namespace {

// Solves X = A' X A + W for Schur-stable A.
Mat discrete_lyapunov(const Mat& A, const Mat& W) {
  const Index n = A.rows();
  const Mat At = A.transpose();
  const Mat lhs = Mat::Identity(n * n, n * n) - kron(At, At);
  const Mat x = unvec(solve_linear(lhs, vec(W)), n, n);
  return symmetrize(x);
}

}  // namespace

std::optional<AreSolution> solve_are(const Mat& F, const Mat& G, const Mat& Q, const Mat& R) {
  if (!is_detectable(F, Q)) return std::nullopt;
  const Index n = F.rows();
  AreSolution out;
  Mat M = Mat::Zero(n, n);
  Mat K;
  const int max_iter = 100000;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Mat next = riccati_step(M, F, G, Q, R, &K);
    const double change = (next - M).norm();
    M = next;
    if (change <= 1e-10 * (1.0 + M.norm())) break;
  }
  out.iterations = it + 1;
  // Newton-Hewer polish from the fixed-point gain.
  for (int k = 0; k < 20; ++k) {
    (void)riccati_step(M, F, G, Q, R, &K);
    const Mat A = F + G * K;
    if (spectral_radius(A) >= 1.0) break;
    const Mat next = discrete_lyapunov(A, Q + K.transpose() * R * K);
    const double change = (next - M).norm();
    M = next;
    ++out.iterations;
    if (change <= 1e-15 * (1.0 + M.norm())) break;
  }
  (void)riccati_step(M, F, G, Q, R, &K);
  out.M = M;
  out.K = K;
  out.residual = are_residual(M, F, G, Q, R);
  if (!(out.residual <= 1e-8 * std::max(1.0, M.norm())) || spectral_radius(F + G * K) >= 1.0) {
    throw ConvergenceError("solve_are: no stabilizing solution reached (residual " +
                           std::to_string(out.residual) + ")");
  }
  return out;
}

std::optional<StabilizedSolution> sinf_solve(const LtiSystem& sys, const CostSpec& cost) {
  validate(sys, cost);
  const auto start = Clock::now();
  const auto are = solve_are(sys.F, sys.G, cost.Q, cost.R);
  if (!are) return std::nullopt;
  StabilizedSolution sol;
  sol.method = Method::sinf;
  sol.K = are->K;
  sol.are_value = are->M;
  sol.iterations = are->iterations;
  sol.converged = true;
  refresh_metrics(sol, sys, cost);
  sol.objective = sol.cost;
  sol.wall_ms = elapsed_ms(start);
  return sol;
}

Mat feedback_from_L(const Mat& L, const Mat& F, const Mat& G, const Mat& R) {
  const Mat LtL = L.transpose() * L;
  const Mat GtLL = G.transpose() * LtL;
  return -solve_linear(R + GtLL * G, GtLL * F);
}

double s1_objective(const Mat& L, const LtiSystem& sys, const CostSpec& cost) {
  const Mat K = feedback_from_L(L, sys.F, sys.G, cost.R);
  return closed_loop_cost(sys.F, sys.G, sys.x0, cost, K);
}

double s2_objective(const Mat& L, const LtiSystem& sys, const CostSpec& cost) {
  const Mat K = feedback_from_L(L, sys.F, sys.G, cost.R);
  const Mat LtL = L.transpose() * L;
  const Vec xT = matrix_power(sys.F + sys.G * K, cost.horizon) * sys.x0;
  return sys.x0.dot(LtL * sys.x0) + xT.dot((cost.S - LtL) * xT);
}

namespace {

using LObjective = double (*)(const Mat&, const LtiSystem&, const CostSpec&);

double safe_objective(LObjective f, const Mat& L, const LtiSystem& sys, const CostSpec& cost) {
  try {
    return finite_or_inf(f(L, sys, cost));
  } catch (const SingularMatrixError&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct NmOutcome {
  Mat L;
  double value;
  int evaluations;
  bool converged;
  int active;
  std::vector<int> witnesses;
};

// Nelder-Mead on L -> max_i f(L, scenario i).
NmOutcome nm_core(LObjective f, const std::vector<Mat>& fs, const Mat& G, const Vec& x0,
                  const CostSpec& cost, const NmConfig& cfg, std::uint64_t seed, Execution ex) {
  const Index n = fs.front().rows();
  Rng rng(seed);
  const Mat L0 = rng.normal_matrix(n, n, cfg.init_scale);
  const int count = static_cast<int>(fs.size());
  std::set<int> witnesses;
  auto evaluate = [&](const Mat& L) {
    return indexed_max(ex, count, [&](int i) {
      return safe_objective(f, L, LtiSystem{fs[static_cast<std::size_t>(i)], G, x0}, cost);
    });
  };
  const Objective obj = [&](const Vec& lv) {
    const IndexedMax best = evaluate(unvec(lv, n, n));
    witnesses.insert(best.index);
    return best.value;
  };
  const NelderMeadResult res = nelder_mead_minimize(obj, vec(L0), cfg.nm);
  NmOutcome out;
  out.L = unvec(res.x, n, n);
  const IndexedMax best = evaluate(out.L);
  out.value = best.value;
  out.active = best.index;
  out.evaluations = res.evaluations;
  out.converged = res.converged;
  out.witnesses.assign(witnesses.begin(), witnesses.end());
  return out;
}

StabilizedSolution nm_solution(Method method, const NmOutcome& o, const LtiSystem& sys,
                               const CostSpec& cost) {
  StabilizedSolution sol;
  sol.method = method;
  sol.L = o.L;
  try {
    sol.K = feedback_from_L(o.L, sys.F, sys.G, cost.R);
  } catch (const SingularMatrixError&) {
    sol.K = Mat::Zero(sys.m(), sys.n());
  }
  sol.objective = o.value;
  sol.iterations = o.evaluations;
  sol.converged = o.converged;
  refresh_metrics(sol, sys, cost);
  return sol;
}

StabilizedSolution nm_solve(Method method, LObjective f, const LtiSystem& sys, const CostSpec& cost,
                            const NmConfig& cfg, std::uint64_t seed) {
  validate(sys, cost);
  const auto start = Clock::now();
  const NmOutcome o = nm_core(f, {sys.F}, sys.G, sys.x0, cost, cfg, seed, Execution::serial);
  StabilizedSolution sol = nm_solution(method, o, sys, cost);
  sol.wall_ms = elapsed_ms(start);
  return sol;
}

}  // namespace

StabilizedSolution s1_solve(const LtiSystem& sys, const CostSpec& cost, const NmConfig& cfg,
                            std::uint64_t seed) {
  return nm_solve(Method::s1, s1_objective, sys, cost, cfg, seed);
}

StabilizedSolution s2_solve(const LtiSystem& sys, const CostSpec& cost, const NmConfig& cfg,
                            std::uint64_t seed) {
  return nm_solve(Method::s2, s2_objective, sys, cost, cfg, seed);
}

StabilizedSolution classic_solve(const LtiSystem& sys, const CostSpec& cost) {
  validate(sys, cost);
  const auto start = Clock::now();
  const FeedbackSequence seq = dre_sweep(sys, cost);
  StabilizedSolution sol;
  sol.method = Method::classic;
  sol.K = seq.gains.back();
  sol.cost = sys.x0.dot(seq.values.front() * sys.x0);
  sol.objective = sol.cost;
  sol.iterations = cost.horizon;
  sol.converged = true;
  refresh_metrics(sol, sys, cost);
  sol.wall_ms = elapsed_ms(start);
  return sol;
}

Mat RobustSolution::gain_for(const Mat& F, const Mat& G, const Mat& R) const {
  if (solution.L) return feedback_from_L(*solution.L, F, G, R);
  return solution.K;
}

RobustSolution robust_solve(Method method, const ScenarioSet& scenarios, const CostSpec& cost,
                            const RobustConfig& cfg) {
  scenarios.validate();
  cost.validate(scenarios.G.rows(), scenarios.G.cols());
  const auto start = Clock::now();
  const Mat& G = scenarios.G;
  const Vec& x0 = scenarios.x0;
  const int count = scenarios.size();
  RobustSolution out;

  switch (method) {
    case Method::s0: {
      // Exact duplicates add nothing to the max or the LMI set.
      std::vector<Mat> unique;
      std::vector<int> origin;
      for (int i = 0; i < count; ++i) {
        const Mat& F = scenarios.F[static_cast<std::size_t>(i)];
        bool seen = false;
        for (const Mat& U : unique) seen = seen || U == F;
        if (!seen) {
          unique.push_back(F);
          origin.push_back(i);
        }
      }
      int active = -1;
      std::vector<int> influence;
      out.solution = s0_core(unique, G, x0, cost, cfg.s0, cfg.seed, cfg.execution, &active, &influence);
      out.active_scenario = active >= 0 ? origin[static_cast<std::size_t>(active)] : -1;
      // A merged copy stands in for its twins, so all of them count.
      std::vector<int> w;
      for (int u : influence) {
        for (int i = 0; i < count; ++i) {
          if (scenarios.F[static_cast<std::size_t>(i)] == unique[static_cast<std::size_t>(u)]) w.push_back(i);
        }
      }
      out.witnesses = w;
      out.decision = vec(out.solution.K);
      break;
    }
    case Method::s1:
    case Method::s2: {
      const LObjective f = method == Method::s1 ? s1_objective : s2_objective;
      const NmOutcome o = nm_core(f, scenarios.F, G, x0, cost, cfg.nm, cfg.seed, cfg.execution);
      out.solution = nm_solution(method, o, scenarios.system(o.active), cost);
      out.solution.objective = o.value;
      out.active_scenario = o.active;
      out.witnesses = o.witnesses;
      out.decision = vec(o.L.transpose() * o.L);  // gauge-free: K depends on L only via L'L
      break;
    }
    case Method::sinf: {
      std::vector<std::optional<AreSolution>> ares(static_cast<std::size_t>(count));
      for_each_index(cfg.execution, count, [&](int i) {
        ares[i] = solve_are(scenarios.F[static_cast<std::size_t>(i)], G, cost.Q, cost.R);
      });
      std::vector<double> costs(static_cast<std::size_t>(count), -std::numeric_limits<double>::infinity());
      for (int i = 0; i < count; ++i) {
        if (!ares[i]) continue;
        out.retained.push_back(i);
        costs[i] = finite_or_inf(closed_loop_cost(scenarios.F[i], G, x0, cost, ares[i]->K));
      }
      if (out.retained.empty()) {
        throw ConvergenceError("robust sinf: no detectable scenario");
      }
      int best = out.retained.front();
      for (int i : out.retained) {
        if (costs[i] > costs[best]) best = i;
      }
      out.active_scenario = best;
      out.witnesses = std::vector<int>{best};
      StabilizedSolution sol;
      sol.method = Method::sinf;
      sol.K = ares[best]->K;
      sol.are_value = ares[best]->M;
      sol.iterations = ares[best]->iterations;
      sol.converged = true;
      sol.objective = costs[best];
      out.solution = sol;
      out.decision = vec(sol.K);
      break;
    }
    case Method::classic:
      throw ValidationError("robust_solve: the classic method has no robust variant");
  }

  // Worst case over the training scenarios.
  StabilizedSolution& sol = out.solution;
  double rho = 0.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) {
    const Mat& F = scenarios.F[static_cast<std::size_t>(i)];
    Mat Ki;
    try {
      Ki = out.gain_for(F, G, cost.R);
    } catch (const SingularMatrixError&) {
      rho = std::numeric_limits<double>::infinity();
      continue;
    }
    const Mat FK = F + G * Ki;
    rho = std::max(rho, FK.allFinite() ? spectral_radius(FK) : std::numeric_limits<double>::infinity());
    worst = std::max(worst, finite_or_inf(closed_loop_cost(F, G, x0, cost, Ki)));
  }
  sol.rho_closed = rho;
  sol.cost = worst;
  sol.wall_ms = elapsed_ms(start);
  return out;
}

}  // namespace slqr
