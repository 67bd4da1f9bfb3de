#include "slqr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "slqr/errors.hpp"

namespace slqr {

ScenarioSet ScenarioSet::subset(const std::vector<int>& indices) const {
  ScenarioSet out;
  out.G = G;
  out.x0 = x0;
  out.provenance = provenance;
  out.F.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= size()) throw ValidationError("ScenarioSet::subset: index out of range");
    out.F.push_back(F[static_cast<std::size_t>(i)]);
  }
  return out;
}

void ScenarioSet::validate() const {
  if (F.empty()) throw ValidationError("ScenarioSet: at least one scenario is required");
  for (std::size_t i = 0; i < F.size(); ++i) {
    LtiSystem{F[i], G, x0}.validate();
    if (F[i].rows() != F[0].rows()) {
      throw ValidationError("ScenarioSet: scenario " + std::to_string(i) + " has a different dimension");
    }
  }
}

void RobustnessBudget::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("budget: epsilon must lie in (0,1)");
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("budget: beta must lie in (0,1)");
  if (d < 1) throw ValidationError("budget: d must be a positive integer");
}

long long required_scenarios(const RobustnessBudget& budget) {
  budget.validate();
  const double bound = (2.0 / budget.epsilon) * (std::log(1.0 / budget.beta) + budget.d - 1);
  // Guard against the bound landing a hair above an integer through rounding.
  const double nearest = std::round(bound);
  if (std::abs(bound - nearest) <= 1e-9 * std::max(1.0, bound)) return static_cast<long long>(nearest);
  return static_cast<long long>(std::ceil(bound));
}

double epsilon_posterior(int k, int n, double beta) {
  if (n < 1 || k < 0 || k > n) throw ValidationError("epsilon_posterior: need 0 <= k <= N, N >= 1");
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("epsilon_posterior: beta must lie in (0,1)");
  if (k == n) return 1.0;
  const double log_binom = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  const double log_ratio = std::log(beta) - std::log(static_cast<double>(n)) - log_binom;
  return 1.0 - std::exp(log_ratio / (n - k));
}

namespace {

double quad_value(const P1Problem& p, const Vec& u) { return p.value(u); }
Vec quad_grad(const P1Problem& p, const Vec& u) { return 2.0 * (p.B * u + p.a); }

struct Barrier {
  const std::vector<P1Problem>& q;
  double tau;

  // Returns +inf outside the domain.
  double value(const Vec& u, double alpha) const {
    double f = alpha / tau;
    for (const auto& p : q) {
      const double s = alpha - quad_value(p, u);
      if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
      f -= std::log(s);
    }
    return f;
  }
};

ScenarioLqrSolution finish(const std::vector<P1Problem>& q, const Vec& u, Vec lambda,
                           const ScenarioLqrOptions& opts) {
  ScenarioLqrSolution sol;
  sol.stacked = u;
  sol.costs.resize(q.size());
  double alpha = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.size(); ++i) {
    sol.costs[i] = quad_value(q[i], u);
    alpha = std::max(alpha, sol.costs[i]);
  }
  sol.alpha = alpha;
  const double scale = std::max(1.0, std::abs(alpha));
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (alpha - sol.costs[i] <= opts.active_tol * scale) sol.active.push_back(static_cast<int>(i));
  }
  lambda = lambda.cwiseMax(0.0);
  if (lambda.sum() > 0.0) lambda /= lambda.sum();
  Vec station = Vec::Zero(u.size());
  double comp = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    station += lambda(static_cast<Index>(i)) * quad_grad(q[i], u);
    comp = std::max(comp, lambda(static_cast<Index>(i)) * (alpha - sol.costs[i]) / scale);
  }
  sol.multipliers = std::move(lambda);
  sol.stationarity = station.norm();
  sol.complementarity = comp;
  return sol;
}

// Newton on the KKT system restricted to the constraints in `act`.
bool polish(const std::vector<P1Problem>& q, const std::vector<int>& act, Vec& u, double& alpha,
            Vec& lam_act) {
  const Index d = u.size();
  const Index k = static_cast<Index>(act.size());
  const Index dim = d + 1 + k;
  for (int it = 0; it < 30; ++it) {
    Vec r = Vec::Zero(dim);
    Mat J = Mat::Zero(dim, dim);
    for (Index j = 0; j < k; ++j) {
      const auto& p = q[static_cast<std::size_t>(act[static_cast<std::size_t>(j)])];
      const Vec g = quad_grad(p, u);
      r.head(d) += lam_act(j) * g;
      J.topLeftCorner(d, d) += lam_act(j) * 2.0 * p.B;
      J.block(0, d + 1 + j, d, 1) = g;
      r(d + 1 + j) = quad_value(p, u) - alpha;
      J.block(d + 1 + j, 0, 1, d) = g.transpose();
      J(d + 1 + j, d) = -1.0;
      J(d, d + 1 + j) = -1.0;
    }
    r(d) = 1.0 - lam_act.sum();
    const double scale = std::max(1.0, std::abs(alpha));
    if (r.lpNorm<Eigen::Infinity>() <= 1e-13 * scale) return true;
    Vec step;
    try {
      step = solve_linear(J, -r);
    } catch (const SingularMatrixError&) {
      return false;
    }
    u += step.head(d);
    alpha += step(d);
    lam_act += step.tail(k);
  }
  return false;
}

}  // namespace

ScenarioLqrSolution solve_scenario_unconstrained(const std::vector<P1Problem>& q,
                                                 const ScenarioLqrOptions& opts) {
  if (q.empty()) throw ValidationError("solve_scenario_unconstrained: no scenarios");
  const Index d = q.front().a.size();
  const std::size_t nq = q.size();

  Vec u = Vec::Zero(d);
  double alpha = -std::numeric_limits<double>::infinity();
  for (const auto& p : q) alpha = std::max(alpha, quad_value(p, u));
  alpha += std::max(1.0, std::abs(alpha));

  double tau = std::max(1.0, std::abs(alpha));
  const double shrink = 0.2;
  Vec lambda(static_cast<Index>(nq));
  int newton_total = 0;
  while (true) {
    Barrier bar{q, tau};
    for (int it = 0; it < opts.max_newton; ++it, ++newton_total) {
      Vec grad = Vec::Zero(d + 1);
      Mat hess = Mat::Zero(d + 1, d + 1);
      grad(d) = 1.0 / tau;
      for (const auto& p : q) {
        const double s = alpha - quad_value(p, u);
        Vec ds(d + 1);
        ds.head(d) = quad_grad(p, u);
        ds(d) = -1.0;
        grad += ds / s;
        hess += ds * ds.transpose() / (s * s);
        hess.topLeftCorner(d, d) += 2.0 * p.B / s;
      }
      Vec step = hess.ldlt().solve(-grad);
      const double decrement = -grad.dot(step);
      if (!(decrement >= 0.0) || !step.allFinite()) {
        throw ConvergenceError("solve_scenario_unconstrained: Newton system is not positive definite");
      }
      if (decrement <= 1e-18) break;
      double t = 1.0;
      const double f0 = bar.value(u, alpha);
      bool moved = false;
      for (int bt = 0; bt < 80; ++bt) {
        const Vec u1 = u + t * step.head(d);
        const double a1 = alpha + t * step(d);
        if (bar.value(u1, a1) <= f0 - 0.25 * t * decrement) {
          u = u1;
          alpha = a1;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved || decrement <= 1e-14) break;
    }
    for (std::size_t i = 0; i < nq; ++i) {
      lambda(static_cast<Index>(i)) = tau / (alpha - quad_value(q[i], u));
    }
    if (static_cast<double>(nq) * tau <= 1e-12 * std::max(1.0, std::abs(alpha))) break;
    tau *= shrink;
  }

  // Active-set polish. Exact duplicates of an active constraint are dropped so
  // the KKT matrix stays nonsingular.
  std::vector<int> act;
  for (std::size_t i = 0; i < nq; ++i) {
    if (lambda(static_cast<Index>(i)) <= 1e-6) continue;
    bool duplicate = false;
    for (int j : act) {
      const auto& a = q[static_cast<std::size_t>(j)];
      if (a.B == q[i].B && a.a == q[i].a && a.constant == q[i].constant) duplicate = true;
    }
    if (!duplicate) act.push_back(static_cast<int>(i));
  }
  if (!act.empty()) {
    Vec u1 = u;
    double a1 = alpha;
    Vec lam(static_cast<Index>(act.size()));
    for (std::size_t j = 0; j < act.size(); ++j) lam(static_cast<Index>(j)) = lambda(act[j]);
    lam /= lam.sum();
    if (polish(q, act, u1, a1, lam) && lam.minCoeff() >= -1e-12) {
      double worst = -std::numeric_limits<double>::infinity();
      for (const auto& p : q) worst = std::max(worst, quad_value(p, u1));
      if (worst <= a1 + 1e-9 * std::max(1.0, std::abs(a1))) {
        u = u1;
        lambda.setZero();
        for (std::size_t j = 0; j < act.size(); ++j) lambda(act[j]) = lam(static_cast<Index>(j));
      }
    }
  }

  ScenarioLqrSolution sol = finish(q, u, lambda, opts);
  const double scale = std::max(1.0, std::abs(sol.alpha));
  if (sol.stationarity > opts.kkt_tol * scale || sol.complementarity > opts.kkt_tol) {
    throw ConvergenceError("solve_scenario_unconstrained: KKT residuals too large (stationarity " +
                           std::to_string(sol.stationarity) + ", complementarity " +
                           std::to_string(sol.complementarity) + ")");
  }
  return sol;
}

ScenarioLqrSolution solve_scenario_unconstrained(const ScenarioSet& scenarios,
                                                 const CostSpec& cost,
                                                 const ScenarioLqrOptions& opts) {
  scenarios.validate();
  std::vector<P1Problem> q;
  q.reserve(scenarios.F.size());
  for (int i = 0; i < scenarios.size(); ++i) q.push_back(build_p1(scenarios.system(i), cost));
  ScenarioLqrSolution sol = solve_scenario_unconstrained(q, opts);
  sol.inputs = InputSequence::from_stacked(sol.stacked, scenarios.G.cols());
  return sol;
}

bool solutions_unchanged(const Vec& a, const Vec& reference, double tol) {
  if (a.size() != reference.size()) return false;
  return (a - reference).norm() <= tol * (1.0 + reference.norm());
}

SupportSubsample greedy_support_subsample(int n, const SubsampleSolver& solver, double beta,
                                          const SupportOptions& opts, std::optional<int> epsilon_n) {
  if (n < 1) throw ValidationError("greedy_support_subsample: need at least one scenario");
  SupportSubsample out;
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;

  const SubsampleSolve full = solver(all);
  ++out.solves;
  out.decision = full.decision;
  std::set<int> influencing;
  if (full.influencing) influencing.insert(full.influencing->begin(), full.influencing->end());

  auto covers_influencing = [&](const std::vector<int>& set) {
    if (!full.influencing) return false;
    return std::includes(set.begin(), set.end(), influencing.begin(), influencing.end());
  };
  auto without = [](const std::vector<int>& set, int drop) {
    std::vector<int> out_set;
    out_set.reserve(set.size());
    for (int i : set) {
      if (i != drop) out_set.push_back(i);
    }
    return out_set;
  };
  // Whether solving on `set` reproduces the full solution.
  auto reproduces = [&](const std::vector<int>& set) {
    if (set.empty()) return false;
    if (covers_influencing(set)) return true;
    const SubsampleSolve s = solver(set);
    return solutions_unchanged(s.decision, full.decision, opts.unchanged_tol);
  };

  // Leave-one-out pass; cached shortcuts are resolved serially, the rest in parallel.
  std::vector<int> to_solve;
  std::vector<char> changed(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    if (n == 1) {
      changed[0] = 1;
    } else if (!covers_influencing(without(all, i))) {
      to_solve.push_back(i);
    }
  }
  for_each_index(opts.execution, static_cast<int>(to_solve.size()), [&](int k) {
    const int i = to_solve[static_cast<std::size_t>(k)];
    const SubsampleSolve s = solver(without(all, i));
    changed[static_cast<std::size_t>(i)] =
        solutions_unchanged(s.decision, full.decision, opts.unchanged_tol) ? 0 : 1;
  });
  out.solves += static_cast<int>(to_solve.size());

  std::vector<int> support;
  for (int i = 0; i < n; ++i) {
    if (changed[static_cast<std::size_t>(i)]) support.push_back(i);
  }

  auto prune = [&](std::vector<int> set) {
    bool pruned = true;
    while (pruned && set.size() > 1) {
      pruned = false;
      for (int j : set) {
        const std::vector<int> smaller = without(set, j);
        ++out.solves;
        if (reproduces(smaller)) {
          set = smaller;
          pruned = true;
          break;
        }
      }
    }
    return set;
  };

  bool confirmed = false;
  if (!support.empty()) {
    ++out.solves;
    if (reproduces(support)) {
      support = prune(support);
      confirmed = true;
    }
  }
  if (!confirmed) {
    // Sequential elimination from the full set, trying non-support indices first.
    std::vector<int> order;
    for (int i = 0; i < n; ++i) {
      if (!changed[static_cast<std::size_t>(i)]) order.push_back(i);
    }
    for (int i = 0; i < n; ++i) {
      if (changed[static_cast<std::size_t>(i)]) order.push_back(i);
    }
    std::vector<int> set = all;
    for (int i : order) {
      if (set.size() <= 1) break;
      const std::vector<int> smaller = without(set, i);
      ++out.solves;
      if (reproduces(smaller)) set = smaller;
    }
    support = set;
  }

  out.indices = support;
  out.cardinality = static_cast<int>(support.size());
  out.epsilon = epsilon_posterior(out.cardinality, epsilon_n.value_or(n), beta);
  return out;
}

double validate_violation(int count, const std::function<bool(int)>& violates) {
  if (count <= 0) return 0.0;
  int bad = 0;
  for (int i = 0; i < count; ++i) bad += violates(i) ? 1 : 0;
  return static_cast<double>(bad) / count;
}

double stability_violation_rate(const std::vector<Mat>& fresh, const Mat& G,
                                const std::function<Mat(const Mat&)>& gain_for) {
  return validate_violation(static_cast<int>(fresh.size()), [&](int i) {
    const Mat& F = fresh[static_cast<std::size_t>(i)];
    return spectral_radius(F + G * gain_for(F)) >= 1.0;
  });
}

}  // namespace slqr
