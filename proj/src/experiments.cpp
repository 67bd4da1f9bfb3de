#include "slqr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "slqr/errors.hpp"

namespace slqr {

using nlohmann::json;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::montecarlo: return "montecarlo";
    case ExperimentKind::nondetectable: return "nondetectable";
    case ExperimentKind::scenario: return "scenario";
    case ExperimentKind::single: return "single";
  }
  return "unknown";
}

ExperimentKind experiment_from_string(const std::string& name) {
  if (name == "montecarlo") return ExperimentKind::montecarlo;
  if (name == "nondetectable") return ExperimentKind::nondetectable;
  if (name == "scenario") return ExperimentKind::scenario;
  if (name == "single" || name == "solve") return ExperimentKind::single;
  throw ValidationError("experiment: unknown kind '" + name + "'");
}

std::uint64_t trial_seed(std::uint64_t seed, int trial, int stream) {
  return Rng(seed).split(static_cast<std::uint64_t>(trial)).split(static_cast<std::uint64_t>(stream)).seed();
}

namespace {

Mat diag(std::initializer_list<double> d) {
  Vec v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

CostSpec leslie_cost() {
  CostSpec c;
  c.Q = diag({5, 4, 3, 2, 1});
  c.R = 5.0 * Mat::Identity(5, 5);
  c.S = c.Q;
  c.horizon = 8;
  return c;
}

Vec leslie_x0() {
  Vec x = Vec::Zero(5);
  x(0) = 5.0;
  return x;
}

const std::vector<Method> kAllMethods = {Method::s0, Method::s1, Method::s2, Method::sinf,
                                         Method::classic};

}  // namespace

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig cfg;
  cfg.kind = kind;
  switch (kind) {
    case ExperimentKind::montecarlo:
      cfg.trials = 100;
      cfg.methods = kAllMethods;
      cfg.cost = leslie_cost();
      cfg.G = Mat::Identity(5, 5);
      cfg.x0 = leslie_x0();
      break;
    case ExperimentKind::nondetectable:
      cfg.trials = 100;
      cfg.methods = kAllMethods;
      cfg.system.F = diag({2, 1});
      cfg.system.G = Mat::Ones(2, 1);
      cfg.system.x0 = Vec::Unit(2, 0);
      cfg.cost.Q = diag({1, 0});
      cfg.cost.R = Mat::Identity(1, 1);
      cfg.cost.S = Mat::Identity(2, 2);
      cfg.cost.horizon = 8;
      break;
    case ExperimentKind::scenario:
      cfg.trials = 1;
      cfg.methods = {Method::s0, Method::s1, Method::s2, Method::sinf};
      cfg.cost = leslie_cost();
      cfg.G = Mat::Identity(5, 5);
      cfg.x0 = leslie_x0();
      cfg.nominal.fecundity = {1.11, 2.05, 1.79, 2.37, 1.10};
      cfg.nominal.survival = {0.97, 0.86, 0.37, 0.09};
      cfg.uncertainty = UncertaintySpec::uniform(4, -0.4, 0.4);
      break;
    case ExperimentKind::single:
      cfg.trials = 1;
      cfg.methods = {Method::classic};
      cfg.system.F = Mat::Ones(1, 1);
      cfg.system.G = Mat::Ones(1, 1);
      cfg.system.x0 = Vec::Ones(1);
      cfg.cost.Q = Mat::Ones(1, 1);
      cfg.cost.R = Mat::Ones(1, 1);
      cfg.cost.S = Mat::Ones(1, 1);
      cfg.cost.horizon = 2;
      break;
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ValidationError("trials: must be at least 1");
  if (methods.empty()) throw ValidationError("methods: at least one method is required");
  s0.validate();
  switch (kind) {
    case ExperimentKind::montecarlo:
      if (leslie_n < 1) throw ValidationError("leslie.n: must be positive");
      if (fecundity.lo < 0.0 || fecundity.lo > fecundity.hi) {
        throw ValidationError("leslie.fecundity_range: need 0 <= lo <= hi");
      }
      if (survival.lo > survival.hi) throw ValidationError("leslie.survival_range: need lo <= hi");
      slqr::validate(LtiSystem{Mat::Zero(leslie_n, leslie_n), G, x0}, cost);
      break;
    case ExperimentKind::nondetectable:
    case ExperimentKind::single:
      slqr::validate(system, cost);
      if (kind == ExperimentKind::single && methods.size() != 1) {
        throw ValidationError("methods: a single solve takes exactly one method");
      }
      break;
    case ExperimentKind::scenario:
      nominal.validate(true);
      uncertainty.validate(static_cast<Index>(nominal.survival.size()));
      if (scenario_count < 1) throw ValidationError("scenario.count: must be positive");
      if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("scenario.beta: must lie in (0,1)");
      if (fresh_samples < 0) throw ValidationError("scenario.fresh_samples: must be >= 0");
      if (!(unchanged_tol > 0.0)) throw ValidationError("scenario.unchanged_tol: must be positive");
      slqr::validate(LtiSystem{leslie_matrix(nominal), G, x0}, cost);
      for (Method m : methods) {
        if (m == Method::classic) throw ValidationError("methods: classic has no robust variant");
      }
      break;
  }
}

// ---------------------------------------------------------------- parsing

namespace {

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ValidationError(path + "." + it.key() + ": unknown field");
  }
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(path + ": must be finite");
  return v;
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ValidationError(path + ": expected an integer");
  const auto v = j.get<long long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ValidationError(path + ": integer out of range");
  }
  return static_cast<int>(v);
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ValidationError(path + ": expected true or false");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ValidationError(path + ": expected a string");
  return j.get<std::string>();
}

std::vector<double> as_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_double(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Vec as_vector(const json& j, const std::string& path) {
  const auto v = as_list(j, path);
  if (v.empty()) throw ValidationError(path + ": must not be empty");
  return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

// Row-major nested arrays.
Mat as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ValidationError(path + ": expected a non-empty array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  Mat out;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array()) throw ValidationError(rp + ": expected a row array");
    const auto row = as_list(j[r], rp);
    if (r == 0) {
      cols = row.size();
      if (cols == 0) throw ValidationError(rp + ": empty row");
      out.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    } else if (row.size() != cols) {
      throw ValidationError(rp + ": ragged matrix, expected " + std::to_string(cols) + " entries");
    }
    for (std::size_t c = 0; c < cols; ++c) out(static_cast<Index>(r), static_cast<Index>(c)) = row[c];
  }
  return out;
}

Range as_range(const json& j, const std::string& path) {
  const auto v = as_list(j, path);
  if (v.size() != 2) throw ValidationError(path + ": expected [lo, hi]");
  if (v[0] > v[1]) throw ValidationError(path + ": lo must not exceed hi");
  return {v[0], v[1]};
}

std::vector<Method> as_methods(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ValidationError(path + ": expected a non-empty array of method names");
  std::vector<Method> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Method m = method_from_string(as_string(j[i], path + "[" + std::to_string(i) + "]"));
    if (std::find(out.begin(), out.end(), m) != out.end()) {
      throw ValidationError(path + ": duplicate method '" + to_string(m) + "'");
    }
    out.push_back(m);
  }
  return out;
}

void parse_cost(const json& j, CostSpec& cost) {
  check_keys(j, "cost", {"Q", "R", "S", "horizon"});
  if (j.contains("Q")) cost.Q = as_matrix(j["Q"], "cost.Q");
  if (j.contains("R")) cost.R = as_matrix(j["R"], "cost.R");
  if (j.contains("S")) cost.S = as_matrix(j["S"], "cost.S");
  if (j.contains("horizon")) cost.horizon = as_int(j["horizon"], "cost.horizon");
}

void parse_s0(const json& j, S0Config& s0) {
  check_keys(j, "s0", {"xi", "mu", "max_outer", "gain_tol", "init_scale", "lbfgs", "barrier"});
  if (j.contains("xi")) s0.xi = as_double(j["xi"], "s0.xi");
  if (j.contains("mu")) s0.mu = as_double(j["mu"], "s0.mu");
  if (j.contains("max_outer")) s0.max_outer = as_int(j["max_outer"], "s0.max_outer");
  if (j.contains("gain_tol")) s0.gain_tol = as_double(j["gain_tol"], "s0.gain_tol");
  if (j.contains("init_scale")) s0.init_scale = as_double(j["init_scale"], "s0.init_scale");
  if (j.contains("lbfgs")) {
    const json& l = j["lbfgs"];
    check_keys(l, "s0.lbfgs", {"memory", "armijo_c", "max_iterations", "gradient_tol"});
    if (l.contains("memory")) s0.lbfgs.memory = as_int(l["memory"], "s0.lbfgs.memory");
    if (l.contains("armijo_c")) s0.lbfgs.armijo_c = as_double(l["armijo_c"], "s0.lbfgs.armijo_c");
    if (l.contains("max_iterations")) s0.lbfgs.max_iterations = as_int(l["max_iterations"], "s0.lbfgs.max_iterations");
    if (l.contains("gradient_tol")) s0.lbfgs.gradient_tol = as_double(l["gradient_tol"], "s0.lbfgs.gradient_tol");
    if (s0.lbfgs.memory < 1 || s0.lbfgs.max_iterations < 1) {
      throw ValidationError("s0.lbfgs: memory and max_iterations must be positive");
    }
  }
  if (j.contains("barrier")) {
    const json& b = j["barrier"];
    check_keys(b, "s0.barrier", {"tau_start", "tau_end", "tau_factor", "max_newton"});
    if (b.contains("tau_start")) s0.barrier.tau_start = as_double(b["tau_start"], "s0.barrier.tau_start");
    if (b.contains("tau_end")) s0.barrier.tau_end = as_double(b["tau_end"], "s0.barrier.tau_end");
    if (b.contains("tau_factor")) s0.barrier.tau_factor = as_double(b["tau_factor"], "s0.barrier.tau_factor");
    if (b.contains("max_newton")) s0.barrier.max_newton = as_int(b["max_newton"], "s0.barrier.max_newton");
    if (!(s0.barrier.tau_end > 0.0 && s0.barrier.tau_end <= s0.barrier.tau_start) ||
        !(s0.barrier.tau_factor > 0.0 && s0.barrier.tau_factor < 1.0) || s0.barrier.max_newton < 1) {
      throw ValidationError("s0.barrier: need 0 < tau_end <= tau_start, tau_factor in (0,1), max_newton >= 1");
    }
  }
}

void parse_nm(const json& j, NmConfig& nm) {
  check_keys(j, "nelder_mead",
             {"max_evaluations", "restarts", "initial_step", "init_scale", "value_tol", "point_tol"});
  if (j.contains("max_evaluations")) nm.nm.max_evaluations = as_int(j["max_evaluations"], "nelder_mead.max_evaluations");
  if (j.contains("restarts")) nm.nm.restarts = as_int(j["restarts"], "nelder_mead.restarts");
  if (j.contains("initial_step")) nm.nm.initial_step = as_double(j["initial_step"], "nelder_mead.initial_step");
  if (j.contains("init_scale")) nm.init_scale = as_double(j["init_scale"], "nelder_mead.init_scale");
  if (j.contains("value_tol")) nm.nm.value_tol = as_double(j["value_tol"], "nelder_mead.value_tol");
  if (j.contains("point_tol")) nm.nm.point_tol = as_double(j["point_tol"], "nelder_mead.point_tol");
  if (nm.nm.max_evaluations < 0 || nm.nm.restarts < 0) {
    throw ValidationError("nelder_mead: max_evaluations and restarts must be >= 0");
  }
}

std::uint64_t as_seed(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
  throw ValidationError(path + ": expected a non-negative integer");
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, std::optional<ExperimentKind> expected) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: invalid JSON (") + e.what() + ")");
  }
  check_keys(j, "config",
             {"experiment", "seed", "trials", "methods", "method", "record_timing", "parallel",
              "system", "cost", "leslie", "scenario", "s0", "nelder_mead", "output"});
  ExperimentKind kind;
  if (j.contains("experiment")) {
    kind = experiment_from_string(as_string(j["experiment"], "config.experiment"));
    if (expected && *expected != kind) {
      throw ValidationError("config.experiment: '" + to_string(kind) + "' does not match the subcommand '" +
                            to_string(*expected) + "'");
    }
  } else if (expected) {
    kind = *expected;
  } else {
    throw ValidationError("config.experiment: missing");
  }

  ExperimentConfig cfg = default_config(kind);
  if (j.contains("seed")) cfg.seed = as_seed(j["seed"], "config.seed");
  if (j.contains("trials")) cfg.trials = as_int(j["trials"], "config.trials");
  if (j.contains("methods") && j.contains("method")) {
    throw ValidationError("config: give either 'method' or 'methods', not both");
  }
  if (j.contains("methods")) cfg.methods = as_methods(j["methods"], "config.methods");
  if (j.contains("method")) cfg.methods = {method_from_string(as_string(j["method"], "config.method"))};
  if (j.contains("record_timing")) cfg.record_timing = as_bool(j["record_timing"], "config.record_timing");
  if (j.contains("parallel")) {
    cfg.execution = as_bool(j["parallel"], "config.parallel") ? Execution::parallel : Execution::serial;
  }
  if (j.contains("output")) cfg.output = as_string(j["output"], "config.output");
  if (j.contains("cost")) parse_cost(j["cost"], cfg.cost);
  if (j.contains("s0")) parse_s0(j["s0"], cfg.s0);
  if (j.contains("nelder_mead")) parse_nm(j["nelder_mead"], cfg.nm);

  const bool wants_system = kind == ExperimentKind::nondetectable || kind == ExperimentKind::single;
  if (j.contains("system")) {
    if (!wants_system) throw ValidationError("config.system: only used by nondetectable and single experiments");
    const json& s = j["system"];
    check_keys(s, "system", {"F", "G", "x0"});
    if (s.contains("F")) cfg.system.F = as_matrix(s["F"], "system.F");
    if (s.contains("G")) cfg.system.G = as_matrix(s["G"], "system.G");
    if (s.contains("x0")) cfg.system.x0 = as_vector(s["x0"], "system.x0");
  }
  if (j.contains("leslie")) {
    if (kind != ExperimentKind::montecarlo) throw ValidationError("config.leslie: only used by montecarlo");
    const json& l = j["leslie"];
    check_keys(l, "leslie", {"n", "fecundity_range", "survival_range", "G", "x0"});
    if (l.contains("n")) cfg.leslie_n = as_int(l["n"], "leslie.n");
    if (l.contains("fecundity_range")) cfg.fecundity = as_range(l["fecundity_range"], "leslie.fecundity_range");
    if (l.contains("survival_range")) cfg.survival = as_range(l["survival_range"], "leslie.survival_range");
    if (l.contains("G")) cfg.G = as_matrix(l["G"], "leslie.G");
    if (l.contains("x0")) cfg.x0 = as_vector(l["x0"], "leslie.x0");
  }
  if (j.contains("scenario")) {
    if (kind != ExperimentKind::scenario) throw ValidationError("config.scenario: only used by scenario");
    const json& s = j["scenario"];
    check_keys(s, "scenario",
               {"fecundity", "survival", "delta_range", "delta_lower", "delta_upper", "count", "beta",
                "fresh_samples", "unchanged_tol", "G", "x0"});
    if (s.contains("fecundity")) cfg.nominal.fecundity = as_list(s["fecundity"], "scenario.fecundity");
    if (s.contains("survival")) cfg.nominal.survival = as_list(s["survival"], "scenario.survival");
    const std::size_t ns = cfg.nominal.survival.size();
    if (s.contains("delta_range") && (s.contains("delta_lower") || s.contains("delta_upper"))) {
      throw ValidationError("scenario: give delta_range or delta_lower/delta_upper, not both");
    }
    if (s.contains("delta_range")) {
      const Range r = as_range(s["delta_range"], "scenario.delta_range");
      cfg.uncertainty = UncertaintySpec::uniform(static_cast<Index>(ns), r.lo, r.hi);
    } else if (s.contains("fecundity") || s.contains("survival")) {
      cfg.uncertainty = UncertaintySpec::uniform(static_cast<Index>(ns), -0.4, 0.4);
    }
    if (s.contains("delta_lower")) cfg.uncertainty.lower = as_list(s["delta_lower"], "scenario.delta_lower");
    if (s.contains("delta_upper")) cfg.uncertainty.upper = as_list(s["delta_upper"], "scenario.delta_upper");
    if (s.contains("count")) cfg.scenario_count = as_int(s["count"], "scenario.count");
    if (s.contains("beta")) cfg.beta = as_double(s["beta"], "scenario.beta");
    if (s.contains("fresh_samples")) cfg.fresh_samples = as_int(s["fresh_samples"], "scenario.fresh_samples");
    if (s.contains("unchanged_tol")) cfg.unchanged_tol = as_double(s["unchanged_tol"], "scenario.unchanged_tol");
    if (s.contains("G")) cfg.G = as_matrix(s["G"], "scenario.G");
    if (s.contains("x0")) cfg.x0 = as_vector(s["x0"], "scenario.x0");
  }
  if (kind == ExperimentKind::scenario && cfg.G.rows() != static_cast<Index>(cfg.nominal.fecundity.size())) {
    cfg.G = Mat::Identity(static_cast<Index>(cfg.nominal.fecundity.size()),
                          static_cast<Index>(cfg.nominal.fecundity.size()));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path, std::optional<ExperimentKind> expected) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), expected);
}

// ---------------------------------------------------------------- runners

namespace {

double rel_gap(double J, double J_star) {
  if (J_star == 0.0) return J == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (J - J_star) / J_star;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

TrialRecord from_solution(int trial, const StabilizedSolution& sol, double rho_open, double J_star) {
  TrialRecord r;
  r.trial = trial;
  r.method = sol.method;
  r.rho_open = rho_open;
  r.rho_closed = sol.rho_closed;
  r.J = sol.cost;
  r.J_star = J_star;
  r.rel_gap = sol.method == Method::classic ? 0.0 : rel_gap(sol.cost, J_star);
  r.time_ms = sol.wall_ms;
  r.converged = sol.converged;
  r.K = sol.K;
  return r;
}

TrialRecord failed_record(int trial, Method method, double rho_open, double J_star, const std::string& what) {
  TrialRecord r;
  r.trial = trial;
  r.method = method;
  r.rho_open = rho_open;
  r.rho_closed = std::numeric_limits<double>::quiet_NaN();
  r.J = std::numeric_limits<double>::quiet_NaN();
  r.J_star = J_star;
  r.rel_gap = std::numeric_limits<double>::quiet_NaN();
  r.converged = false;
  r.error = what;
  return r;
}

// Runs every requested deterministic method on one system.
std::vector<TrialRecord> solve_all(int trial, const LtiSystem& sys, const ExperimentConfig& cfg) {
  std::vector<TrialRecord> out;
  const double rho_open = spectral_radius(sys.F);
  const StabilizedSolution classic = classic_solve(sys, cfg.cost);
  const double J_star = classic.cost;
  for (Method m : cfg.methods) {
    const std::uint64_t seed = trial_seed(cfg.seed, trial, 1 + static_cast<int>(m));
    try {
      switch (m) {
        case Method::classic:
          out.push_back(from_solution(trial, classic, rho_open, J_star));
          break;
        case Method::s0:
          out.push_back(from_solution(trial, s0_solve(sys, cfg.cost, cfg.s0, seed), rho_open, J_star));
          break;
        case Method::s1:
          out.push_back(from_solution(trial, s1_solve(sys, cfg.cost, cfg.nm, seed), rho_open, J_star));
          break;
        case Method::s2:
          out.push_back(from_solution(trial, s2_solve(sys, cfg.cost, cfg.nm, seed), rho_open, J_star));
          break;
        case Method::sinf: {
          const auto sol = sinf_solve(sys, cfg.cost);
          if (sol) {
            out.push_back(from_solution(trial, *sol, rho_open, J_star));
          } else {
            // Not detectable: the system is left in open loop.
            StabilizedSolution open;
            open.method = Method::sinf;
            open.K = Mat::Zero(sys.m(), sys.n());
            refresh_metrics(open, sys, cfg.cost);
            TrialRecord r = from_solution(trial, open, rho_open, J_star);
            r.not_detectable = true;
            r.converged = false;
            out.push_back(r);
          }
          break;
        }
      }
    } catch (const Error& e) {
      out.push_back(failed_record(trial, m, rho_open, J_star, e.what()));
    }
  }
  return out;
}

std::vector<MethodSummary> summarize(const std::vector<Method>& methods,
                                     const std::vector<TrialRecord>& records) {
  std::vector<MethodSummary> out;
  for (Method m : methods) {
    MethodSummary s;
    s.method = m;
    std::vector<double> gaps, costs;
    for (const auto& r : records) {
      if (r.method != m) continue;
      ++s.runs;
      if (!r.error.empty()) {
        ++s.failures;
        continue;
      }
      if (r.not_detectable) ++s.not_detectable;
      if (r.rho_closed < 1.0) ++s.stabilized;
      gaps.push_back(r.rel_gap);
      costs.push_back(r.J);
      if (r.support_size) s.support_size = r.support_size;
      if (r.epsilon) s.epsilon = r.epsilon;
      if (r.fresh_stable_rate) s.fresh_stable_rate = r.fresh_stable_rate;
    }
    s.median_gap = median(gaps);
    s.median_cost = median(costs);
    out.push_back(s);
  }
  return out;
}

ExperimentResult collect(ExperimentKind kind, const ExperimentConfig& cfg,
                         std::vector<std::vector<TrialRecord>>& per_trial) {
  ExperimentResult res;
  res.kind = kind;
  res.trials = cfg.trials;
  for (auto& rows : per_trial) {
    if (!rows.empty() && rows.front().rho_open > 1.0) ++res.open_loop_unstable;
    for (auto& r : rows) res.records.push_back(std::move(r));
  }
  res.summary = summarize(cfg.methods, res.records);
  return res;
}

}  // namespace

ExperimentResult run_montecarlo(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<TrialRecord>> per_trial(static_cast<std::size_t>(cfg.trials));
  for_each_index(cfg.execution, cfg.trials, [&](int trial) {
    Rng rng(trial_seed(cfg.seed, trial, 0));
    const LeslieParams p = sample_random_leslie(rng, cfg.leslie_n, cfg.fecundity, cfg.survival);
    const LtiSystem sys{leslie_matrix(p), cfg.G, cfg.x0};
    per_trial[static_cast<std::size_t>(trial)] = solve_all(trial, sys, cfg);
  });
  return collect(ExperimentKind::montecarlo, cfg, per_trial);
}

ExperimentResult run_nondetectable(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<TrialRecord>> per_trial(static_cast<std::size_t>(cfg.trials));
  for_each_index(cfg.execution, cfg.trials, [&](int trial) {
    per_trial[static_cast<std::size_t>(trial)] = solve_all(trial, cfg.system, cfg);
  });
  return collect(ExperimentKind::nondetectable, cfg, per_trial);
}

namespace {

std::vector<TrialRecord> scenario_trial(int trial, const ExperimentConfig& cfg) {
  Rng train_rng(trial_seed(cfg.seed, trial, 0));
  Rng fresh_rng(trial_seed(cfg.seed, trial, 1));
  const ScenarioSet scen = sample_scenarios(cfg.nominal, cfg.uncertainty, cfg.scenario_count, train_rng, cfg.G, cfg.x0);
  const ScenarioSet fresh = sample_scenarios(cfg.nominal, cfg.uncertainty, std::max(1, cfg.fresh_samples), fresh_rng, cfg.G, cfg.x0);

  double rho_open = 0.0;
  double J_star = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < scen.size(); ++i) {
    rho_open = std::max(rho_open, spectral_radius(scen.F[static_cast<std::size_t>(i)]));
    J_star = std::max(J_star, optimal_cost(scen.system(i), cfg.cost));
  }

  std::vector<TrialRecord> out;
  for (Method m : cfg.methods) {
    RobustConfig rc;
    rc.s0 = cfg.s0;
    rc.nm = cfg.nm;
    rc.seed = trial_seed(cfg.seed, trial, 1 + static_cast<int>(m));
    // Trials already spread over threads; keep each solve serial.
    rc.execution = Execution::serial;
    try {
      const RobustSolution full = robust_solve(m, scen, cfg.cost, rc);
      const SubsampleSolver solver = [&](const std::vector<int>& idx) {
        const RobustSolution r = robust_solve(m, scen.subset(idx), cfg.cost, rc);
        SubsampleSolve s;
        s.decision = r.decision;
        if (r.witnesses) {
          std::vector<int> mapped;
          for (int w : *r.witnesses) mapped.push_back(idx[static_cast<std::size_t>(w)]);
          s.influencing = mapped;
        }
        return s;
      };
      SupportOptions so;
      so.unchanged_tol = cfg.unchanged_tol;
      so.execution = cfg.execution;
      std::optional<int> eps_n;
      if (m == Method::sinf) eps_n = static_cast<int>(full.retained.size());
      const SupportSubsample support = greedy_support_subsample(scen.size(), solver, cfg.beta, so, eps_n);

      TrialRecord r = from_solution(trial, full.solution, rho_open, J_star);
      r.epsilon = support.epsilon;
      r.support_size = support.cardinality;
      if (cfg.fresh_samples > 0) {
        const double violation = stability_violation_rate(
            fresh.F, fresh.G, [&](const Mat& F) { return full.gain_for(F, fresh.G, cfg.cost.R); });
        r.fresh_stable_rate = 1.0 - violation;
      }
      out.push_back(r);
    } catch (const Error& e) {
      out.push_back(failed_record(trial, m, rho_open, J_star, e.what()));
    }
  }
  return out;
}

}  // namespace

ExperimentResult run_scenario(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<TrialRecord>> per_trial(static_cast<std::size_t>(cfg.trials));
  for_each_index(cfg.execution, cfg.trials, [&](int trial) {
    per_trial[static_cast<std::size_t>(trial)] = scenario_trial(trial, cfg);
  });
  return collect(ExperimentKind::scenario, cfg, per_trial);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::montecarlo: return run_montecarlo(cfg);
    case ExperimentKind::nondetectable: return run_nondetectable(cfg);
    case ExperimentKind::scenario: return run_scenario(cfg);
    case ExperimentKind::single: break;
  }
  throw ValidationError("run_experiment: single solves go through run_single");
}

SolveReport run_single(const ExperimentConfig& cfg) {
  cfg.validate();
  SolveReport rep;
  rep.method = cfg.methods.front();
  rep.J_star = optimal_cost(cfg.system, cfg.cost);
  const std::uint64_t seed = trial_seed(cfg.seed, 0, 1 + static_cast<int>(rep.method));
  switch (rep.method) {
    case Method::classic: rep.solution = classic_solve(cfg.system, cfg.cost); break;
    case Method::s0: rep.solution = s0_solve(cfg.system, cfg.cost, cfg.s0, seed); break;
    case Method::s1: rep.solution = s1_solve(cfg.system, cfg.cost, cfg.nm, seed); break;
    case Method::s2: rep.solution = s2_solve(cfg.system, cfg.cost, cfg.nm, seed); break;
    case Method::sinf:
      rep.solution = sinf_solve(cfg.system, cfg.cost);
      rep.not_detectable = !rep.solution.has_value();
      break;
  }
  return rep;
}

// ---------------------------------------------------------------- output

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  if (!std::isfinite(v)) return num(v);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json json_num(double v) {
  if (std::isfinite(v)) return v;
  return num(v);
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(json_num(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

json summary_json(const MethodSummary& s) {
  json j{{"method", to_string(s.method)},
         {"runs", s.runs},
         {"stabilized", s.stabilized},
         {"not_detectable", s.not_detectable},
         {"failures", s.failures},
         {"median_rel_gap", json_num(s.median_gap)},
         {"median_J", json_num(s.median_cost)}};
  if (s.support_size) j["support_size"] = *s.support_size;
  if (s.epsilon) j["epsilon_posterior"] = *s.epsilon;
  if (s.fresh_stable_rate) j["fresh_stable_rate"] = *s.fresh_stable_rate;
  return j;
}

}  // namespace

void write_csv(std::ostream& os, const ExperimentResult& result, bool record_timing) {
  os << "trial,method,rho_open,rho_closed,J,J_star,rel_gap,time_ms,converged,epsilon_posterior\n";
  for (const auto& r : result.records) {
    os << r.trial << ',' << to_string(r.method) << ',' << num(r.rho_open) << ',' << num(r.rho_closed)
       << ',' << num(r.J) << ',' << num(r.J_star) << ',' << num(r.rel_gap) << ','
       << (record_timing ? num(r.time_ms) : std::string()) << ',' << (r.converged ? "true" : "false")
       << ',' << (r.epsilon ? num(*r.epsilon) : std::string()) << '\n';
  }
}

void write_json(std::ostream& os, const ExperimentResult& result, bool record_timing) {
  json out;
  out["experiment"] = to_string(result.kind);
  out["trials"] = result.trials;
  out["open_loop_unstable"] = result.open_loop_unstable;
  json records = json::array();
  for (const auto& r : result.records) {
    json j{{"trial", r.trial},
           {"method", to_string(r.method)},
           {"rho_open", json_num(r.rho_open)},
           {"rho_closed", json_num(r.rho_closed)},
           {"J", json_num(r.J)},
           {"J_star", json_num(r.J_star)},
           {"rel_gap", json_num(r.rel_gap)},
           {"converged", r.converged},
           {"not_detectable", r.not_detectable},
           {"K", matrix_json(r.K)}};
    if (record_timing) j["time_ms"] = r.time_ms;
    j["epsilon_posterior"] = r.epsilon ? json(*r.epsilon) : json(nullptr);
    if (r.support_size) j["support_size"] = *r.support_size;
    if (r.fresh_stable_rate) j["fresh_stable_rate"] = *r.fresh_stable_rate;
    if (!r.error.empty()) j["error"] = r.error;
    records.push_back(j);
  }
  out["records"] = records;
  json summary = json::array();
  for (const auto& s : result.summary) summary.push_back(summary_json(s));
  out["summary"] = summary;
  os << out.dump(2) << '\n';
}

void write_summary(std::ostream& os, const ExperimentResult& result) {
  os << to_string(result.kind) << ": " << result.trials << " trial(s), open loop unstable in "
     << result.open_loop_unstable << '\n';
  os << std::left << std::setw(10) << "method" << std::setw(8) << "runs" << std::setw(12) << "stabilized"
     << std::setw(16) << "median_gap" << std::setw(10) << "support" << std::setw(12) << "epsilon"
     << "fresh_stable" << '\n';
  for (const auto& s : result.summary) {
    std::string label = to_string(s.method);
    if (s.method == Method::sinf && s.not_detectable == s.runs && s.runs > 0) label += "=open";
    os << std::left << std::setw(10) << label << std::setw(8) << s.runs << std::setw(12) << s.stabilized
       << std::setw(16) << short_num(s.median_gap) << std::setw(10)
       << (s.support_size ? std::to_string(*s.support_size) : "-") << std::setw(12)
       << (s.epsilon ? short_num(*s.epsilon) : "-")
       << (s.fresh_stable_rate ? short_num(*s.fresh_stable_rate) : "-") << '\n';
  }
}

void write_report_json(std::ostream& os, const SolveReport& report) {
  json out;
  out["method"] = to_string(report.method);
  out["J_star"] = json_num(report.J_star);
  if (report.not_detectable) {
    out["status"] = "not_detectable";
  } else if (report.solution) {
    const StabilizedSolution& s = *report.solution;
    out["status"] = "ok";
    out["K"] = matrix_json(s.K);
    out["rho_closed"] = json_num(s.rho_closed);
    out["J"] = json_num(s.cost);
    out["objective"] = json_num(s.objective);
    out["iterations"] = s.iterations;
    out["converged"] = s.converged;
    json cert = json::object();
    if (s.certificate) {
      cert["P"] = matrix_json(s.certificate->P);
      cert["C"] = matrix_json(s.certificate->C);
      cert["D"] = matrix_json(s.certificate->D);
      cert["xi"] = s.certificate->xi;
    }
    if (s.are_value) cert["M_inf"] = matrix_json(*s.are_value);
    if (s.L) cert["L"] = matrix_json(*s.L);
    out["certificate"] = cert;
  }
  os << out.dump(2) << '\n';
}

}  // namespace slqr
