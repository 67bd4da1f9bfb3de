#include "slqr/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace slqr {

namespace {

struct Pair {
  Vec s, y;
  double rho;
};

Vec two_loop(const std::deque<Pair>& mem, const Vec& g) {
  Vec q = g;
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    alpha[k] = mem[k].rho * mem[k].s.dot(q);
    q -= alpha[k] * mem[k].y;
  }
  if (!mem.empty()) {
    const auto& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double beta = mem[k].rho * mem[k].y.dot(q);
    q += (alpha[k] - beta) * mem[k].s;
  }
  return -q;
}

}  // namespace

LbfgsResult lbfgs_minimize(const ValueAndGradient& fg, const Vec& x0, const LbfgsOptions& opts) {
  LbfgsResult res;
  Vec x = x0;
  Vec g(x.size());
  double f = fg(x, g);
  std::deque<Pair> mem;
  Vec g_new(x.size());

  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it;
    if (!std::isfinite(f)) break;
    if (g.lpNorm<Eigen::Infinity>() <= opts.gradient_tol * std::max(1.0, std::abs(f))) {
      res.converged = true;
      break;
    }

    Vec d = mem.empty() ? Vec(-g / std::max(1.0, g.norm())) : two_loop(mem, g);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      mem.clear();
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
    }

    bool accepted = false;
    double step = 1.0;
    Vec x_new;
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      for (int bt = 0; bt < opts.max_backtracks; ++bt) {
        x_new = x + step * d;
        f_new = fg(x_new, g_new);
        if (std::isfinite(f_new) && f_new <= f + opts.armijo_c * step * slope) {
          accepted = true;
          break;
        }
        step *= opts.backtrack;
      }
      if (!accepted && attempt == 0) {
        // damped restart
        ++res.restarts;
        mem.clear();
        d = -g / std::max(1.0, g.norm());
        slope = g.dot(d);
        step = 1e-3;
      }
    }
    if (!accepted) {
      // No descent left at working precision: treat as stationary.
      res.converged = true;
      break;
    }

    const Vec s = x_new - x;
    const Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      mem.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(mem.size()) > opts.memory) mem.pop_front();
    }
    const double decrease = f - f_new;
    x = std::move(x_new);
    f = f_new;
    g = g_new;
    res.iterations = it + 1;
    if (decrease <= opts.value_tol * std::max(1.0, std::abs(f))) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.value = f;
  return res;
}

NelderMeadResult nelder_mead_minimize(const Objective& fun, const Vec& x0,
                                      const NelderMeadOptions& opts) {
  const Index dim = x0.size();
  const int max_evals = opts.max_evaluations > 0 ? opts.max_evaluations
                                                 : static_cast<int>(2000 * dim);
  NelderMeadResult res;
  int evals = 0;
  auto f = [&](const Vec& x) {
    ++evals;
    const double v = fun(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Vec> pts(dim + 1);
  std::vector<double> vals(dim + 1);
  std::vector<std::size_t> order(dim + 1);

  auto build_simplex = [&](const Vec& base, double base_value) {
    pts[0] = base;
    vals[0] = base_value;
    for (Index k = 0; k < dim; ++k) {
      pts[k + 1] = base;
      pts[k + 1](k) += opts.initial_step;
      vals[k + 1] = f(pts[k + 1]);
    }
  };
  auto sort_simplex = [&]() {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<Vec> p2(dim + 1);
    std::vector<double> v2(dim + 1);
    for (std::size_t i = 0; i < order.size(); ++i) {
      p2[i] = std::move(pts[order[i]]);
      v2[i] = vals[order[i]];
    }
    pts = std::move(p2);
    vals = std::move(v2);
  };
  auto collapsed = [&]() {
    const double spread = vals[dim] - vals[0];
    if (!(spread <= opts.value_tol * std::max(1.0, std::abs(vals[0])))) return false;
    double dx = 0.0;
    for (Index k = 1; k <= dim; ++k) dx = std::max(dx, (pts[k] - pts[0]).lpNorm<Eigen::Infinity>());
    return dx <= opts.point_tol;
  };

  build_simplex(x0, f(x0));
  int restarts_left = opts.restarts;
  bool converged = false;
  while (evals < max_evals) {
    sort_simplex();
    if (collapsed()) {
      if (restarts_left-- > 0) {
        ++res.restarts_used;
        const Vec best = pts[0];
        const double best_value = vals[0];
        build_simplex(best, best_value);
        continue;
      }
      converged = true;
      break;
    }
    Vec centroid = Vec::Zero(dim);
    for (Index k = 0; k < dim; ++k) centroid += pts[k];
    centroid /= static_cast<double>(dim);
    const Vec& worst = pts[dim];

    const Vec xr = centroid + opts.reflection * (centroid - worst);
    const double fr = f(xr);
    if (fr < vals[0]) {
      const Vec xe = centroid + opts.expansion * (xr - centroid);
      const double fe = f(xe);
      if (fe < fr) {
        pts[dim] = xe;
        vals[dim] = fe;
      } else {
        pts[dim] = xr;
        vals[dim] = fr;
      }
      continue;
    }
    if (fr < vals[dim - 1]) {
      pts[dim] = xr;
      vals[dim] = fr;
      continue;
    }
    if (fr < vals[dim]) {
      const Vec xc = centroid + opts.contraction * (xr - centroid);
      const double fc = f(xc);
      if (fc <= fr) {
        pts[dim] = xc;
        vals[dim] = fc;
        continue;
      }
    } else {
      const Vec xcc = centroid + opts.contraction * (worst - centroid);
      const double fcc = f(xcc);
      if (fcc < vals[dim]) {
        pts[dim] = xcc;
        vals[dim] = fcc;
        continue;
      }
    }
    for (Index k = 1; k <= dim; ++k) {
      pts[k] = pts[0] + opts.shrink * (pts[k] - pts[0]);
      vals[k] = f(pts[k]);
    }
  }
  sort_simplex();
  res.x = pts[0];
  res.value = vals[0];
  res.evaluations = evals;
  res.converged = converged;
  return res;
}

}  // namespace slqr
