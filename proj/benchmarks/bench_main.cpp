#include <benchmark/benchmark.h>

#include "polling/batch.hpp"
#include "polling/geometry.hpp"
#include "polling/montecarlo.hpp"
#include "polling/oracle.hpp"

using namespace polling;

namespace {

const Params kRaySpiral = Params::stable(0.3, 0.05, 0.65);
const Params kSpiralSpiral = Params::stable(0.3, 0.15, 0.55);

void BM_StationaryTruncated(benchmark::State& state) {
  const int L = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(stationary_truncated(kSpiralSpiral, L).mass);
}
BENCHMARK(BM_StationaryTruncated)->Arg(20)->Arg(40)->Arg(80)->Unit(benchmark::kMillisecond);

void BM_TabooGreenExact(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(taboo_green_exact(kRaySpiral, 10, 40).sum);
}
BENCHMARK(BM_TabooGreenExact)->Unit(benchmark::kMillisecond);

void BM_BusyPeriods(benchmark::State& state) {
  SimConfig c;
  c.params = kSpiralSpiral;
  c.level = static_cast<int>(state.range(0));
  c.trajectories = 10000;
  std::uint64_t seed = 1;
  for (auto _ : state) {
    c.seed = seed++;
    benchmark::DoNotOptimize(run_busy_periods(c).total_visits);
  }
  state.SetItemsProcessed(state.iterations() * c.trajectories);
}
BENCHMARK(BM_BusyPeriods)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_TwistToward(benchmark::State& state) {
  const FreeIncrements inc = sheet_increments(kRaySpiral, Sheet::Serve1);
  const Eigen::Vector2d d(0.4, 0.6);
  for (auto _ : state) benchmark::DoNotOptimize(twist_toward(inc, d).lambda_star);
}
BENCHMARK(BM_TwistToward);

void BM_TwistTowardGeneric(benchmark::State& state) {
  const FreeIncrements inc = sheet_increments(kRaySpiral, Sheet::Serve1);
  const Eigen::Vector2d d(0.4, 0.6);
  for (auto _ : state) benchmark::DoNotOptimize(twist_toward_generic(inc, d).lambda_star);
}
BENCHMARK(BM_TwistTowardGeneric);

void BM_FindAlpha(benchmark::State& state) {
  const BatchParams bp(ArrivalPGF::poisson(0.3), ArrivalPGF::poisson(0.15));
  for (auto _ : state) benchmark::DoNotOptimize(find_alpha(bp));
}
BENCHMARK(BM_FindAlpha);

}  // namespace

BENCHMARK_MAIN();
