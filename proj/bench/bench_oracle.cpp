// Serial reference against the OpenMP paths of the oracle and the chain driver.

#include <benchmark/benchmark.h>

#include "dyadcart/chains.hpp"
#include "dyadcart/haar.hpp"
#include "dyadcart/oracle.hpp"

using namespace dyadcart;

namespace {

const PosteriorEngine& engine_at(int L) {
  static const auto make = [](int depth) {
    const std::size_t n = std::size_t{1} << (depth + 1);
    SignalSpec spec;
    spec.coefficients = {{{0, 0}, 2.0}, {{1, 1}, 2.0}};
    spec.seed = 11;
    const auto y = generate_dataset(spec, RegularDesign::from_n(n));
    ModelConfig cfg;
    cfg.depth_cap = depth;
    return PosteriorEngine(haar_inner_products(y, RegularDesign::from_n(n)), cfg);
  };
  static const PosteriorEngine e4 = make(4), e5 = make(5);
  return L == 4 ? e4 : e5;
}

void BM_BuildMatrix(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0));
  const auto exec = state.range(1) ? Execution::parallel : Execution::serial;
  const KernelSpec spec{KernelKind::informed_twiggy, true};
  for (auto _ : state) {
    auto tm = build_transition_matrix(engine_at(L), spec, exec);
    benchmark::DoNotOptimize(tm.val.data());
  }
  state.SetLabel(exec == Execution::parallel ? "parallel" : "serial");
}
BENCHMARK(BM_BuildMatrix)->Args({4, 0})->Args({4, 1})->Args({5, 0})->Args({5, 1})
    ->Unit(benchmark::kMillisecond);

void BM_TvCurve(benchmark::State& state) {
  const auto exec = state.range(0) ? Execution::parallel : Execution::serial;
  const auto tm = build_transition_matrix(engine_at(4), KernelSpec{KernelKind::twiggy, true});
  for (auto _ : state) {
    auto d = tv_curve(tm, 200, exec);
    benchmark::DoNotOptimize(d.data());
  }
  state.SetLabel(exec == Execution::parallel ? "parallel" : "serial");
}
BENCHMARK(BM_TvCurve)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Chains(benchmark::State& state) {
  RunOptions ro;
  ro.kernel = KernelSpec{static_cast<KernelKind>(state.range(0)), false};
  ro.chains = 8;
  ro.steps = 20000;
  ro.threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    auto t = run_chains(engine_at(5), ro);
    benchmark::DoNotOptimize(t.data());
  }
  state.SetItemsProcessed(state.iterations() * ro.chains * static_cast<std::int64_t>(ro.steps));
}
BENCHMARK(BM_Chains)
    ->Args({static_cast<int>(KernelKind::grow_prune), 1})
    ->Args({static_cast<int>(KernelKind::grow_prune), 0})
    ->Args({static_cast<int>(KernelKind::informed_twiggy), 1})
    ->Args({static_cast<int>(KernelKind::informed_twiggy), 0})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
