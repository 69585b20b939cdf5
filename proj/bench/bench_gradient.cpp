// OpenMP gradient against the serial reference, plus the cost and the
// smoother on their own for scale.
//
//   ./build/bench/bench_gradient --benchmark_counters_tabular=true

#include <random>

#include <benchmark/benchmark.h>

#include "pnmpc/ocp.hpp"

using namespace pnmpc;

namespace {

struct Fixture {
  Problem problem = vanderpol_example();
  OCPSpec spec;
  VecD theta;

  explicit Fixture(int n_int) : spec(make_spec(problem, CostMode::Proposed, n_int)) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    theta.resize(spec.parameter_count());
    for (int i = 0; i < theta.size(); ++i) theta(i) = unif(rng);
  }
};

void BM_cost(benchmark::State& state) {
  const Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(expected_cost(f.spec, f.problem.ivp, f.theta).total);
}

void BM_gradient_parallel(benchmark::State& state) {
  const Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gradient(f.spec, f.problem.ivp, f.theta).data());
  state.counters["params"] = static_cast<double>(f.theta.size());
}

void BM_gradient_serial(benchmark::State& state) {
  const Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(gradient_serial(f.spec, f.problem.ivp, f.theta).data());
  state.counters["params"] = static_cast<double>(f.theta.size());
}

}  // namespace

BENCHMARK(BM_cost)->Arg(20)->Arg(40)->Arg(160)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gradient_parallel)->Arg(20)->Arg(40)->Arg(160)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_gradient_serial)->Arg(20)->Arg(40)->Arg(160)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
