// slqr: run the stabilizing-LQR experiments or a single solve.
//
//   slqr montecarlo    [--config f.json] [--seed S] [--trials N] [--methods s0,s1,...]
//   slqr nondetectable [...]
//   slqr scenario      [...]
//   slqr solve --config f.json [--method s0]
//
// Exit codes: 0 ok, 2 bad config or arguments, 3 solver failure,
// 4 single solve on a non-detectable system with sinf.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "slqr/errors.hpp"
#include "slqr/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitNotDetectable = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::string methods;
  std::string out;
  std::string format = "csv";
  bool timing = false;
  bool serial = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Options& o, bool batch) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output file (default stdout)");
  if (batch) {
    cmd->add_option("--trials", o.trials, "number of trials");
    cmd->add_option("--methods", o.methods, "comma-separated methods: s0,s1,s2,sinf,classic");
    cmd->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_flag("--timing", o.timing, "record wall-clock time per solve");
    cmd->add_flag("--serial", o.serial, "run trials on one thread");
    cmd->add_flag("--quiet", o.quiet, "skip the summary table on stderr");
  } else {
    cmd->add_option("--method", o.methods, "s0, s1, s2, sinf or classic");
  }
}

slqr::ExperimentConfig build_config(slqr::ExperimentKind kind, const Options& o) {
  slqr::ExperimentConfig cfg =
      o.config.empty() ? slqr::default_config(kind) : slqr::load_config(o.config, kind);
  if (o.seed) cfg.seed = *o.seed;
  if (o.trials) cfg.trials = *o.trials;
  if (!o.methods.empty()) {
    cfg.methods.clear();
    std::stringstream ss(o.methods);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!name.empty()) cfg.methods.push_back(slqr::method_from_string(name));
    }
  }
  if (o.timing) cfg.record_timing = true;
  if (o.serial) cfg.execution = slqr::Execution::serial;
  if (!o.out.empty()) cfg.output = o.out;
  cfg.validate();
  return cfg;
}

template <class Writer>
void emit(const std::string& path, Writer&& write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream f(path);
  if (!f) throw slqr::ValidationError("--out: cannot open '" + path + "' for writing");
  write(f);
}

int run_batch(slqr::ExperimentKind kind, const Options& o) {
  const slqr::ExperimentConfig cfg = build_config(kind, o);
  const slqr::ExperimentResult res = slqr::run_experiment(cfg);
  emit(cfg.output, [&](std::ostream& os) {
    if (o.format == "json") {
      slqr::write_json(os, res, cfg.record_timing);
    } else {
      slqr::write_csv(os, res, cfg.record_timing);
    }
  });
  if (!o.quiet) slqr::write_summary(std::cerr, res);
  return 0;
}

int run_solve(const Options& o) {
  if (o.config.empty()) throw slqr::ValidationError("solve: --config is required");
  const slqr::ExperimentConfig cfg = build_config(slqr::ExperimentKind::single, o);
  const slqr::SolveReport rep = slqr::run_single(cfg);
  emit(cfg.output, [&](std::ostream& os) { slqr::write_report_json(os, rep); });
  if (rep.not_detectable) {
    std::cerr << "slqr: (F, Q^{1/2}) is not detectable; sinf has no stabilizing solution\n";
    return kExitNotDetectable;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stabilizing suboptimal LQR experiments"};
  app.require_subcommand(1);
  Options mc, nd, sc, single;
  auto* c_mc = app.add_subcommand("montecarlo", "random Leslie models");
  auto* c_nd = app.add_subcommand("nondetectable", "the non-detectable benchmark system");
  auto* c_sc = app.add_subcommand("scenario", "robust design over sampled Leslie models");
  auto* c_solve = app.add_subcommand("solve", "one method on one system");
  add_common(c_mc, mc, true);
  add_common(c_nd, nd, true);
  add_common(c_sc, sc, true);
  add_common(c_solve, single, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (c_mc->parsed()) return run_batch(slqr::ExperimentKind::montecarlo, mc);
    if (c_nd->parsed()) return run_batch(slqr::ExperimentKind::nondetectable, nd);
    if (c_sc->parsed()) return run_batch(slqr::ExperimentKind::scenario, sc);
    return run_solve(single);
  } catch (const slqr::ValidationError& e) {
    std::cerr << "slqr: " << e.what() << '\n';
    return kExitConfig;
  } catch (const slqr::Error& e) {
    std::cerr << "slqr: solver failure: " << e.what() << '\n';
    return kExitSolver;
  }
}
