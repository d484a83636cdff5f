#include <benchmark/benchmark.h>

#include "graphon_mfc/ensemble.hpp"
#include "graphon_mfc/fixedpoint.hpp"
#include "graphon_mfc/rng.hpp"
#include "graphon_mfc/simulate.hpp"
#include "graphon_mfc/wasserstein.hpp"

namespace {

using namespace gmfc;

EmpiricalMeasure random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::vector<double> xs(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < dim; ++c) {
            xs[i * dim + c] = rng::normal(seed, rng::kProbeDomain, 0, i, 0, c);
        }
    }
    return EmpiricalMeasure(dim, std::move(xs));
}

void bm_wasserstein_1d(benchmark::State& state) {
    const auto a = random_cloud(static_cast<std::size_t>(state.range(0)), 1, 1);
    const auto b = random_cloud(static_cast<std::size_t>(state.range(0)), 1, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(wasserstein2(a, b));
    }
}
BENCHMARK(bm_wasserstein_1d)->Arg(1000)->Arg(10000);

void bm_wasserstein_simplex_2d(benchmark::State& state) {
    const auto a = random_cloud(static_cast<std::size_t>(state.range(0)), 2, 3);
    const auto b = random_cloud(static_cast<std::size_t>(state.range(0)), 2, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(wasserstein2(a, b));
    }
}
BENCHMARK(bm_wasserstein_simplex_2d)->Arg(16)->Arg(64);

CoefficientSet bench_model(const LabelGrid& grid) {
    auto graphon = std::make_shared<Graphon>(Graphon::constant(grid));
    MeanReversionParams params;
    params.kappa = 0.5;
    params.sigma0 = 0.3;
    params.sigma1 = 0.2;
    return make_graphon_mean_reversion(grid, graphon, params);
}

void bm_simulate_step(benchmark::State& state) {
    const auto grid = LabelGrid::uniform(8);
    const auto coeffs = bench_model(grid);
    const auto ens = make_ensemble(quantile_maps::gaussian(0.0, 1.0, 1.0, 0.0, 1), grid, 1,
                                   static_cast<std::size_t>(state.range(0)), 11);
    const Policy policy = Policy::constant_action({0.0});
    SimOptions opts;
    opts.store_paths = false;
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate(coeffs, policy, ens, 0.0, 0.05, 16, 11, opts));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 16 * 8);
}
BENCHMARK(bm_simulate_step)->Arg(1000)->Arg(5000);

void bm_picard_iteration(benchmark::State& state) {
    const auto grid = LabelGrid::uniform(8);
    const auto coeffs = bench_model(grid);
    const auto ens = make_ensemble(quantile_maps::gaussian(0.0, 1.0, 1.0, 0.0, 1), grid, 1,
                                   static_cast<std::size_t>(state.range(0)), 11);
    const Policy policy = Policy::constant_action({0.0});
    const TimeWindow window = TimeWindow::span(0.0, 0.1, 20);
    const MeasureFlow nu0 = constant_law_flow(ens, window);
    for (auto _ : state) {
        benchmark::DoNotOptimize(apply_psi(coeffs, policy, ens, nu0, 11));
    }
}
BENCHMARK(bm_picard_iteration)->Arg(1000)->Arg(5000);

}  // namespace

BENCHMARK_MAIN();
