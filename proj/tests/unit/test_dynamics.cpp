#include <cmath>

#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "graphon_mfc/numeric.hpp"
#include "graphon_mfc/simulate.hpp"
#include "graphon_mfc/wasserstein.hpp"
#include "support/models.hpp"

using namespace gmfc;

namespace {

const Policy kZero = Policy::constant_action({0.0});

}  // namespace

TEST_CASE("constant drift integrates exactly") {
    const auto grid = LabelGrid({0.5}, {1.0});
    auto cs = testing::scalar_model(grid, testing::const_fn(1.0), testing::const_fn(0.0));
    const auto ens = make_ensemble(quantile_maps::constant({0.25}), grid, 1, 3, 7);
    for (std::size_t steps : {1, 7, 64}) {
        const auto res = simulate(cs, kZero, ens, 0.0, 1.0, steps, 7);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(res.final_ensemble.state(0, i)[0] == doctest::Approx(1.25).epsilon(1e-14));
        }
    }
}

TEST_CASE("brownian terminal variance matches within monte carlo error") {
    const auto grid = LabelGrid({0.5}, {1.0});
    auto cs = testing::scalar_model(grid, testing::const_fn(0.0), testing::const_fn(1.0));
    const std::size_t n = 100000;
    const auto ens = make_ensemble(quantile_maps::constant({0.0}), grid, 1, n, 11);
    SimOptions opts;
    opts.store_paths = false;
    const auto res = simulate(cs, kZero, ens, 0.0, 1.0, 16, 11, opts);
    const double var = res.final_ensemble.collection().moments().aggregate_second_total;
    // var(X_T^2 samples) = 2 for the unit normal: 3 MC standard errors
    const double se = std::sqrt(2.0 / static_cast<double>(n));
    CHECK(std::abs(var - 1.0) <= 3.0 * se);
}

TEST_CASE("population mean is conserved by mean-field pull with sigma = 0") {
    const auto grid = LabelGrid::uniform(2);
    auto graphon = std::make_shared<Graphon>(Graphon::constant(grid));
    auto cs = testing::scalar_model(
        grid,
        [](std::size_t u, double, std::span<const double> x, std::span<const double>,
           const EvalContext& ctx, std::span<double> out) {
            out[0] = ctx.neighborhood_mean(u)[0] - x[0];
        },
        testing::const_fn(0.0));
    cs.graphon = graphon;
    cs.uses_neighborhood = true;
    // symmetric initial cloud around 0.5
    const auto ens = make_ensemble(quantile_maps::uniform(0.0, 1.0, 1), grid, 1, 64, 3);
    double initial_mean = 0.0;
    {
        const auto moms = ens.collection().moments();
        initial_mean = moms.aggregate_mean[0];
    }
    SimOptions opts;
    opts.store_paths = true;
    const auto res = simulate(cs, kZero, ens, 0.0, 1.0, 50, 3, opts);
    for (std::size_t j = 0; j <= 50; ++j) {
        const auto moms = res.flow.collection_at(j).moments();
        CHECK(std::abs(moms.aggregate_mean[0] - initial_mean) <= 1e-12);
    }
}

TEST_CASE("cost quadrature closed forms and the naive-loop oracle") {
    const auto grid = LabelGrid({0.2, 0.8}, {0.25, 0.75});
    SUBCASE("f = 1, g = 0 gives the horizon times the total mass") {
        auto cs = testing::scalar_model(grid, testing::const_fn(0.0), testing::const_fn(0.0));
        cs.running_cost = [](std::size_t, double, std::span<const double>,
                             std::span<const double>, const EvalContext&) { return 1.0; };
        const auto ens = make_ensemble(quantile_maps::constant({0.0}), grid, 1, 4, 5);
        const auto res = simulate(cs, kZero, ens, 0.0, 2.0, 37, 5);
        CHECK(cost(cs, res).value == doctest::Approx(2.0).epsilon(1e-13));
    }
    SUBCASE("terminal-only cost reads the deterministic terminal state") {
        auto cs = testing::scalar_model(grid, testing::const_fn(1.0), testing::const_fn(0.0));
        cs.terminal_cost = [](std::size_t, std::span<const double> x, const EvalContext&) {
            return x[0];
        };
        const auto ens = make_ensemble(quantile_maps::constant({0.5}), grid, 1, 4, 5);
        const auto res = simulate(cs, kZero, ens, 0.0, 1.0, 10, 5);
        // X_T = 1.5 for every particle; J = 1.5 * lambda(U) = 1.5
        CHECK(cost(cs, res).value == doctest::Approx(1.5).epsilon(1e-13));
    }
    SUBCASE("running + terminal cost matches an independent naive re-evaluation") {
        auto graphon = std::make_shared<Graphon>(Graphon::constant(grid));
        auto cs = make_graphon_lq(grid, graphon, LabelPoly{{1.0}}, 0.4, 6.0);
        const Policy pol = Policy::constant_action({0.3});
        const auto ens = make_ensemble(quantile_maps::gaussian(0.2, 0.0, 1.0, 0.0, 1), grid, 1,
                                       32, 9);
        SimOptions opts;
        opts.store_paths = true;
        const std::size_t steps = 12;
        const auto res = simulate(cs, pol, ens, 0.0, 0.6, steps, 9, opts);
        const double dt = 0.6 / static_cast<double>(steps);
        // naive loop: left-endpoint quadrature, particle averages, lambda sum
        double naive = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            double label_sum = 0.0;
            for (std::size_t i = 0; i < 32; ++i) {
                double particle_cost = 0.0;
                for (std::size_t j = 0; j < steps; ++j) {
                    const auto mc = res.flow.collection_at(j);
                    const auto target = graphon_neighborhood(*graphon, mc, k).mean()[0];
                    const double x = res.flow.state_block(k, j)[i];
                    particle_cost += dt * (0.5 * 0.3 * 0.3 + 0.5 * sq(x - target));
                }
                label_sum += particle_cost;
            }
            naive += grid.weight(k) * label_sum / 32.0;
        }
        CHECK(cost(cs, res).value == doctest::Approx(naive).epsilon(1e-12));
    }
}

TEST_CASE("determinism: same seed is bitwise identical at any thread count") {
    const auto grid = LabelGrid::uniform(3);
    auto graphon = std::make_shared<Graphon>(Graphon::product(grid));
    MeanReversionParams params;
    params.kappa = 0.4;
    params.sigma0 = 0.3;
    params.sigma1 = 0.2;
    auto cs = make_graphon_mean_reversion(grid, graphon, params);
    const auto ens = make_ensemble(quantile_maps::gaussian(0.0, 1.0, 1.0, 0.0, 1), grid, 1, 257, 13);

    auto run = [&]() { return simulate(cs, kZero, ens, 0.0, 0.5, 20, 13); };
#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    const auto res1 = run();
#ifdef _OPENMP
    omp_set_num_threads(std::max(2, saved));
#endif
    const auto res2 = run();
#ifdef _OPENMP
    omp_set_num_threads(saved);
#endif
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto a = res1.final_ensemble.states(k);
        const auto b = res2.final_ensemble.states(k);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    CHECK(cost(cs, res1).value == cost(cs, res2).value);
}

TEST_CASE("euler weak error on the affine benchmark is first order") {
    // dX = (b0 + b1 X) dt + (s0 + s1 X) dW: the discrete first/second
    // moments satisfy exact recursions, which gives a noise-free view
    // of the scheme bias against the continuous-time moments.
    const double b0 = 0.3, b1 = -0.8, s0 = 0.4, s1 = 0.3, x0 = 1.0, horizon = 1.0;
    auto discrete_second_moment = [&](std::size_t steps) {
        const double dt = horizon / static_cast<double>(steps);
        double m = x0, q = x0 * x0;
        for (std::size_t j = 0; j < steps; ++j) {
            const double eb2 = b0 * b0 + 2.0 * b0 * b1 * m + b1 * b1 * q;
            const double es2 = s0 * s0 + 2.0 * s0 * s1 * m + s1 * s1 * q;
            const double m_next = m + dt * (b0 + b1 * m);
            q = q + 2.0 * dt * (b0 * m + b1 * q) + dt * dt * eb2 + dt * es2;
            m = m_next;
        }
        return q;
    };
    // continuous moments by fine RK4 on the moment ODEs
    double m = x0, q = x0 * x0;
    const std::size_t fine = 20000;
    const double h = horizon / static_cast<double>(fine);
    auto rhs = [&](double mm, double qq, double& dm, double& dq) {
        dm = b0 + b1 * mm;
        dq = 2.0 * (b0 * mm + b1 * qq) + s0 * s0 + 2.0 * s0 * s1 * mm + s1 * s1 * qq;
    };
    for (std::size_t j = 0; j < fine; ++j) {
        double k1m, k1q, k2m, k2q, k3m, k3q, k4m, k4q;
        rhs(m, q, k1m, k1q);
        rhs(m + 0.5 * h * k1m, q + 0.5 * h * k1q, k2m, k2q);
        rhs(m + 0.5 * h * k2m, q + 0.5 * h * k2q, k3m, k3q);
        rhs(m + h * k3m, q + h * k3q, k4m, k4q);
        m += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    }
    const double err_coarse = std::abs(discrete_second_moment(32) - q);
    const double err_fine = std::abs(discrete_second_moment(64) - q);
    CHECK(err_fine <= 0.6 * err_coarse);  // halving dt at least halves the bias

    // and the simulator reproduces the exact discrete moments within MC error
    const auto grid = LabelGrid({0.5}, {1.0});
    auto cs = testing::scalar_model(
        grid,
        [=](std::size_t, double, std::span<const double> x, std::span<const double>,
            const EvalContext&, std::span<double> out) { out[0] = b0 + b1 * x[0]; },
        [=](std::size_t, double, std::span<const double> x, std::span<const double>,
            const EvalContext&, std::span<double> out) { out[0] = s0 + s1 * x[0]; });
    const std::size_t n = 40000;
    const auto ens = make_ensemble(quantile_maps::constant({x0}), grid, 1, n, 77);
    SimOptions opts;
    opts.store_paths = false;
    const auto res = simulate(cs, kZero, ens, 0.0, horizon, 32, 77, opts);
    const double mc_q = res.final_ensemble.collection().moments().aggregate_second[0];
    CHECK(std::abs(mc_q - discrete_second_moment(32)) <= 4.0 * 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("empirical interaction converges to the mean ODE system in N") {
    // two labels, linear mean-field drift, sigma = 1: the exact mean obeys
    // m' = kappa (W m - m), solvable; the empirical mean fluctuates at
    // N^{-1/2}; Euler mean recursion is exact for this drift.
    const auto grid = LabelGrid({0.25, 0.75}, {0.4, 0.6});
    auto graphon = std::make_shared<Graphon>(Graphon::product(grid));
    MeanReversionParams params;
    params.kappa = 0.6;
    params.sigma0 = 1.0;
    auto cs = make_graphon_mean_reversion(grid, graphon, params);
    const std::size_t steps = 40;
    const double horizon = 1.0;
    const double dt = horizon / static_cast<double>(steps);
    // exact discrete mean recursion
    std::vector<double> mean = {0.25, 0.75};  // init = label value, deterministic
    for (std::size_t j = 0; j < steps; ++j) {
        std::vector<double> next(2);
        for (std::size_t u = 0; u < 2; ++u) {
            const auto mix = graphon->mixture_weights(u);
            const double target = mix[0] * mean[0] + mix[1] * mean[1];
            next[u] = mean[u] + dt * params.kappa * (target - mean[u]);
        }
        mean = next;
    }
    for (std::size_t n : {std::size_t{1000}, std::size_t{16000}}) {
        const auto ens = make_ensemble(quantile_maps::label_value(1), grid, 1, n, 31);
        SimOptions opts;
        opts.store_paths = false;
        const auto res = simulate(cs, kZero, ens, 0.0, horizon, steps, 31, opts);
        const auto moms = res.final_ensemble.collection().moments();
        const double envelope = 4.0 / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(moms.mean[0][0] - mean[0]) <= envelope);
        CHECK(std::abs(moms.mean[1][0] - mean[1]) <= envelope);
    }
}

TEST_CASE("blow-up guard reports the failing step") {
    const auto grid = LabelGrid({0.5}, {1.0});
    auto cs = testing::scalar_model(
        grid,
        [](std::size_t, double, std::span<const double> x, std::span<const double>,
           const EvalContext&, std::span<double> out) { out[0] = x[0] * x[0] * x[0]; },
        testing::const_fn(0.0));
    const auto ens = make_ensemble(quantile_maps::constant({4.0}), grid, 1, 2, 3);
    CHECK_THROWS_AS(simulate(cs, kZero, ens, 0.0, 4.0, 40, 3), NumericalFailure);
    try {
        simulate(cs, kZero, ens, 0.0, 4.0, 40, 3);
    } catch (const NumericalFailure& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("policy actions outside the action space are rejected") {
    const auto grid = LabelGrid({0.5}, {1.0});
    auto cs = testing::scalar_model(grid, testing::const_fn(0.0), testing::const_fn(0.0), 0.5);
    const auto ens = make_ensemble(quantile_maps::constant({0.0}), grid, 1, 2, 3);
    CHECK_THROWS_AS(simulate(cs, Policy::constant_action({2.0}), ens, 0.0, 1.0, 4, 3),
                    InvalidArgument);
}

TEST_CASE("discrete flow property: a restarted run continues bit for bit") {
    const auto grid = LabelGrid::uniform(2);
    auto graphon = std::make_shared<Graphon>(Graphon::constant(grid));
    MeanReversionParams params;
    params.kappa = 0.5;
    params.sigma0 = 0.4;
    params.sigma1 = 0.2;
    params.cost_x2 = 1.0;
    auto cs = make_graphon_mean_reversion(grid, graphon, params);
    const auto ens = make_ensemble(quantile_maps::gaussian(0.3, 0.0, 0.8, 0.0, 1), grid, 1, 123, 19);

    const TimeWindow full = TimeWindow::span(0.0, 1.0, 16);
    SimOptions opts;
    opts.store_paths = false;
    const auto res_full = simulate(cs, kZero, ens, full, 19, opts);

    TimeWindow head = full;
    head.steps = 10;
    const auto res_head = simulate(cs, kZero, ens, head, 19, opts);
    const auto res_tail = simulate(cs, kZero, res_head.final_ensemble, head.continuation(6), 19, opts);

    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto a = res_full.final_ensemble.states(k);
        const auto b = res_tail.final_ensemble.states(k);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    // cost additivity across the seam, up to aggregation roundoff
    const double j_full = cost(cs, res_full).value;
    const double j_split = cost(cs, res_head).value + cost(cs, res_tail).value;
    CHECK(j_full == doctest::Approx(j_split).epsilon(1e-13));
}
