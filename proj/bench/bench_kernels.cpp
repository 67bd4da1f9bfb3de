// Serial vs OpenMP variants of the index-parallel kernels. Run with
// OMP_NUM_THREADS set to compare; on a single core the two should tie.

#include <benchmark/benchmark.h>

#include "slqr/leslie.hpp"
#include "slqr/lmi.hpp"
#include "slqr/parallel.hpp"
#include "slqr/rng.hpp"
#include "slqr/stability.hpp"

namespace {

using namespace slqr;

struct Fixture {
  ScenarioSet scen;
  CostSpec cost;
  Mat K;

  explicit Fixture(int count) {
    LeslieParams nominal{{1.11, 2.05, 1.79, 2.37, 1.10}, {0.97, 0.86, 0.37, 0.09}};
    Rng rng(7);
    scen = sample_scenarios(nominal, UncertaintySpec::uniform(4, -0.4, 0.4), count, rng);
    cost.Q = Vec::LinSpaced(5, 5, 1).asDiagonal();
    cost.R = 5.0 * Mat::Identity(5, 5);
    cost.S = cost.Q;
    cost.horizon = 8;
    scen.x0 = Vec::Unit(5, 0) * 5.0;
    K = -0.5 * Mat::Identity(5, 5);
  }
};

Execution policy(const benchmark::State& state) {
  return state.range(1) ? Execution::parallel : Execution::serial;
}

void BM_ScenarioMaxCost(benchmark::State& state) {
  Fixture fx(static_cast<int>(state.range(0)));
  const Execution ex = policy(state);
  for (auto _ : state) {
    const IndexedMax best = indexed_max(ex, fx.scen.size(), [&](int i) {
      return closed_loop_cost(fx.scen.F[static_cast<std::size_t>(i)], fx.scen.G, fx.scen.x0, fx.cost, fx.K);
    });
    benchmark::DoNotOptimize(best);
  }
}

void BM_BarrierDerivatives(benchmark::State& state) {
  Fixture fx(static_cast<int>(state.range(0)));
  const Execution ex = policy(state);
  const Index n = 5;
  const Mat P = Mat::Identity(n, n);
  const Mat C = Mat::Identity(n, n);
  // F + G K with K = -F is zero, so the identity certificate is interior.
  std::vector<Mat> fs;
  for (const Mat& F : fx.scen.F) fs.push_back(0.1 * F);
  const Mat D = Mat::Zero(n, n);
  for (auto _ : state) {
    auto d = lmi_barrier_derivatives(fs, fx.scen.G, 1e-5, P, C, D, ex);
    benchmark::DoNotOptimize(d);
  }
}

void BM_LeaveOneOut(benchmark::State& state) {
  Fixture fx(static_cast<int>(state.range(0)));
  const Execution ex = policy(state);
  for (auto _ : state) {
    std::vector<double> out(fx.scen.F.size());
    for_each_index(ex, fx.scen.size(), [&](int i) {
      auto a = solve_are(fx.scen.F[static_cast<std::size_t>(i)], fx.scen.G, fx.cost.Q, fx.cost.R);
      out[static_cast<std::size_t>(i)] = a ? a->M.trace() : 0.0;
    });
    benchmark::DoNotOptimize(out);
  }
}

}  // namespace

BENCHMARK(BM_ScenarioMaxCost)->ArgsProduct({{50, 400}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BarrierDerivatives)->ArgsProduct({{10, 50}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LeaveOneOut)->ArgsProduct({{50}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
