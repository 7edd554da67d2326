#include "linkedmf/decompose.hpp"
#include "linkedmf/impute.hpp"
#include "linkedmf/rng.hpp"
#include "linkedmf/simbench.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace linkedmf;

void BM_ThinSvd(benchmark::State& state) {
  Rng rng(1);
  const Matrix x = rng.normal_matrix(state.range(0), state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(thin_svd(x));
}
BENCHMARK(BM_ThinSvd)->Args({100, 100})->Args({1000, 100})->Args({1000, 500})->Unit(benchmark::kMillisecond);

void BM_EvbShrink(benchmark::State& state) {
  const SingleSim sim = gen_single_fixed(0.5, 2, state.range(0), state.range(1), 10);
  for (auto _ : state) benchmark::DoNotOptimize(evb_shrink_matrix(sim.x, 1.0));
}
BENCHMARK(BM_EvbShrink)->Args({1000, 100})->Unit(benchmark::kMillisecond);

void BM_EstimateSigma(benchmark::State& state) {
  const SingleSim sim = gen_single_fixed(0.5, 3, state.range(0), state.range(1), 10);
  const SvdTriple svd = thin_svd(sim.x);
  for (auto _ : state)
    benchmark::DoNotOptimize(estimate_sigma_from_values(svd.values, sim.x.rows(), sim.x.cols()));
}
BENCHMARK(BM_EstimateSigma)->Args({1000, 100})->Args({1000, 500})->Unit(benchmark::kMicrosecond);

// 2 x 2 grid of size (n + n) x (n / 10 + n / 10), all 9 modules enumerated.
void BM_EvBidifac(benchmark::State& state) {
  const Index n = state.range(0);
  const LinkedSim sim = gen_bidim(4, n, n / 10, 2, 5);
  FitOptions o;
  o.rel_tolerance = 1e-6;
  for (auto _ : state) benchmark::DoNotOptimize(ev_bidifac(sim.grid, sim.modules, o));
}
BENCHMARK(BM_EvBidifac)->Arg(100)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_BidifacPlus(benchmark::State& state) {
  const Index n = state.range(0);
  const LinkedSim sim = gen_bidim(4, n, n / 10, 2, 5);
  const auto lambdas = default_lambdas(sim.modules, sim.grid.layout());
  FitOptions o;
  o.rel_tolerance = 1e-6;
  for (auto _ : state) benchmark::DoNotOptimize(bidifac_plus(sim.grid, sim.modules, lambdas, o));
}
BENCHMARK(BM_BidifacPlus)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_EvBidifacImpute(benchmark::State& state) {
  const SingleSim sim = gen_hetero(5, 1000, 100, 10);
  Rng rng(6);
  Mask mask = Mask::Constant(1000, 100, false);
  for (Index e : rng.sample(100000, state.range(0) * 1000)) mask(e % 1000, e / 1000) = true;
  const BlockGrid g(Layout({1000}, {100}), sim.x, mask);
  FitOptions o;
  o.rel_tolerance = 1e-6;
  for (auto _ : state) benchmark::DoNotOptimize(ev_bidifac_impute(g, enumerate_modules(1, 1), o));
}
BENCHMARK(BM_EvBidifacImpute)->Arg(20)->Arg(50)->Unit(benchmark::kMillisecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
