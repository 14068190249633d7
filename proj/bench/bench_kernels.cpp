// Kernel sweep timings: plain-loop reference vs. the log-domain pass run
// serially and with OpenMP. Sizes are training lengths; M = 2, p = 2.
#include <benchmark/benchmark.h>

#include "kdehmm/datasets.hpp"
#include "kdehmm/kcde_pass.hpp"

namespace {

using namespace kdehmm;

struct Problem {
  LagMatrix rows;
  KernelBank bank;
};

Problem make_problem(std::size_t n) {
  SyntheticSpec spec;
  spec.length = n;
  spec.seed = 7;
  const TimeSeries s = generate_synthetic(spec).series;
  Problem pr{LagMatrix::truncated(s.view(), 2), {}};
  pr.bank.states = 2;
  pr.bank.order = 2;
  pr.bank.exemplars = pr.rows.rows();
  pr.bank.bandwidths = {1.0, 1.2, 1.5, 2.0, 2.5, 3.0};
  pr.bank.log_weights.assign(2 * pr.bank.exemplars, -std::log(static_cast<double>(pr.bank.exemplars)));
  return pr;
}

PassOptions options() {
  PassOptions o;
  o.exclude_self = true;
  o.bound = BoundKind::kHmmExact;
  return o;
}

void BM_Reference(benchmark::State& state) {
  const Problem pr = make_problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::kcde_pass(pr.rows, pr.rows, pr.bank, options()));
}

void BM_Serial(benchmark::State& state) {
  const Problem pr = make_problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kcde_pass(pr.rows, pr.rows, pr.bank, options(), Execution::kSerial));
}

void BM_Parallel(benchmark::State& state) {
  const Problem pr = make_problem(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kcde_pass(pr.rows, pr.rows, pr.bank, options(), Execution::kParallel));
}

}  // namespace

BENCHMARK(BM_Reference)->Arg(200)->Arg(800)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Serial)->Arg(200)->Arg(800)->Arg(3000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Parallel)->Arg(200)->Arg(800)->Arg(3000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
