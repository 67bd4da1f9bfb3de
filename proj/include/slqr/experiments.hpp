#pragma once

// Experiment drivers behind the command-line tool: Monte Carlo over random
// Leslie models, the non-detectable benchmark system, the scenario experiment
// and single solves. Configs are JSON; see docs/config.md.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "slqr/leslie.hpp"
#include "slqr/stability.hpp"

namespace slqr {

enum class ExperimentKind { montecarlo, nondetectable, scenario, single };

[[nodiscard]] std::string to_string(ExperimentKind k);
[[nodiscard]] ExperimentKind experiment_from_string(const std::string& name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::montecarlo;
  std::uint64_t seed = 1;
  int trials = 100;
  std::vector<Method> methods;
  CostSpec cost;
  bool record_timing = false;
  Execution execution = Execution::parallel;

  // nondetectable, single
  LtiSystem system;

  // montecarlo
  Index leslie_n = 5;
  Range fecundity{0.0, 4.0};
  Range survival{0.0, 1.0};
  Mat G;   // shared input matrix (identity by default)
  Vec x0;  // shared initial state

  // scenario
  LeslieParams nominal;
  UncertaintySpec uncertainty;
  int scenario_count = 50;
  double beta = 0.05;
  int fresh_samples = 100;
  double unchanged_tol = 1e-6;

  S0Config s0;
  NmConfig nm;
  std::string output;  // empty means stdout

  void validate() const;
};

// Defaults reproduce the published setups for each experiment kind.
[[nodiscard]] ExperimentConfig default_config(ExperimentKind kind);
// Unknown fields and malformed values raise ValidationError naming the field.
[[nodiscard]] ExperimentConfig parse_config(const std::string& json_text,
                                            std::optional<ExperimentKind> expected = std::nullopt);
[[nodiscard]] ExperimentConfig load_config(const std::string& path,
                                           std::optional<ExperimentKind> expected = std::nullopt);

struct TrialRecord {
  int trial = 0;
  Method method = Method::classic;
  double rho_open = 0.0;
  double rho_closed = 0.0;
  double J = 0.0;
  double J_star = 0.0;
  double rel_gap = 0.0;
  double time_ms = 0.0;
  bool converged = false;
  std::optional<double> epsilon;
  bool not_detectable = false;
  std::string error;  // non-empty when the solver failed for this trial
  Mat K;
  // scenario experiment only
  std::optional<int> support_size;
  std::optional<double> fresh_stable_rate;
};

struct MethodSummary {
  Method method = Method::classic;
  int runs = 0;
  int stabilized = 0;  // rho_closed < 1
  int not_detectable = 0;
  int failures = 0;
  double median_gap = 0.0;
  double median_cost = 0.0;
  std::optional<int> support_size;
  std::optional<double> epsilon;
  std::optional<double> fresh_stable_rate;
};

struct ExperimentResult {
  ExperimentKind kind = ExperimentKind::montecarlo;
  std::vector<TrialRecord> records;  // ordered by (trial, method)
  std::vector<MethodSummary> summary;
  int open_loop_unstable = 0;  // trials with rho_open > 1
  int trials = 0;
};

[[nodiscard]] ExperimentResult run_montecarlo(const ExperimentConfig& cfg);
[[nodiscard]] ExperimentResult run_nondetectable(const ExperimentConfig& cfg);
[[nodiscard]] ExperimentResult run_scenario(const ExperimentConfig& cfg);
[[nodiscard]] ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct SolveReport {
  Method method = Method::classic;
  bool not_detectable = false;
  double J_star = 0.0;
  std::optional<StabilizedSolution> solution;
};
[[nodiscard]] SolveReport run_single(const ExperimentConfig& cfg);

void write_csv(std::ostream& os, const ExperimentResult& result, bool record_timing);
void write_json(std::ostream& os, const ExperimentResult& result, bool record_timing);
void write_summary(std::ostream& os, const ExperimentResult& result);
void write_report_json(std::ostream& os, const SolveReport& report);

// Seed used for (trial, method); stable across runs and platforms.
[[nodiscard]] std::uint64_t trial_seed(std::uint64_t seed, int trial, int stream);

}  // namespace slqr
