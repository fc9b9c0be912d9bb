// Serial reference vs OpenMP versions of the parallel kernels.

#include <benchmark/benchmark.h>

#include "pwlmdp/bench.hpp"
#include "pwlmdp/dp.hpp"
#include "pwlmdp/grid_oracle.hpp"
#include "pwlmdp/planner.hpp"

using namespace pwlmdp;

namespace {

void BM_GridOracleSerial(benchmark::State& state) {
    const Mdp mdp = semirand_reference();
    for (auto _ : state) benchmark::DoNotOptimize(grid_dp_oracle_serial(mdp, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_GridOracleSerial)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);

void BM_GridOracleParallel(benchmark::State& state) {
    const Mdp mdp = semirand_reference();
    for (auto _ : state) benchmark::DoNotOptimize(grid_dp_oracle(mdp, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_GridOracleParallel)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);

void BM_HistogramSerial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(run_histogram_serial("rand", static_cast<int>(state.range(0)), 7));
}
BENCHMARK(BM_HistogramSerial)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_HistogramParallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(run_histogram("rand", static_cast<int>(state.range(0)), 7));
}
BENCHMARK(BM_HistogramParallel)->Arg(32)->Unit(benchmark::kMillisecond);

struct RolloutFixture {
    Mdp mdp = semirand_reference();
    ActFn act;
    std::vector<double> starts = midpoint_grid(4096);

    RolloutFixture() {
        const DpResult r = value_iteration(mdp);
        act = [q = r.q](double s, int t) {
            (void)t;
            Action best = 0;
            for (Action a = 1; a < q.per_action.size(); ++a)
                if (q(s, a) > q(s, best)) best = a;
            return best;
        };
    }
};

void BM_MeanReturnSerial(benchmark::State& state) {
    static const RolloutFixture fx;
    for (auto _ : state) benchmark::DoNotOptimize(mean_return_serial(fx.mdp, fx.act, fx.starts, 11, 1.0));
}
BENCHMARK(BM_MeanReturnSerial)->Unit(benchmark::kMillisecond);

void BM_MeanReturnParallel(benchmark::State& state) {
    static const RolloutFixture fx;
    for (auto _ : state) benchmark::DoNotOptimize(mean_return(fx.mdp, fx.act, fx.starts, 11, 1.0));
}
BENCHMARK(BM_MeanReturnParallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
