#include <cmath>

#include <doctest.h>

#include "graphon_mfc/ensemble.hpp"
#include "graphon_mfc/graphon.hpp"
#include "graphon_mfc/numeric.hpp"
#include "graphon_mfc/rng.hpp"
#include "graphon_mfc/wasserstein.hpp"
#include "support/ot_oracle.hpp"

using namespace gmfc;

TEST_CASE("label grid invariants") {
    CHECK_THROWS_AS(LabelGrid({0.1, 0.1}, {0.5, 0.5}), InvalidArgument);  // duplicate labels
    CHECK_THROWS_AS(LabelGrid({0.1, 0.2}, {0.5, 0.0}), InvalidArgument);  // zero weight
    CHECK_THROWS_AS(LabelGrid({}, {}), InvalidArgument);
    const auto grid = LabelGrid::uniform(4, 2.0);
    CHECK(grid.total_mass() == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(grid.size() == 4);
}

TEST_CASE("empirical measure normalizes weights and rejects junk") {
    EmpiricalMeasure m(1, {0.0, 1.0}, {2.0, 6.0});
    CHECK(m.weight(0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(m.weight(1) == doctest::Approx(0.75).epsilon(1e-14));
    CHECK_THROWS_AS(EmpiricalMeasure(1, {std::nan("")}), InvalidArgument);
    CHECK_THROWS_AS(EmpiricalMeasure(1, {0.0}, {-1.0}), InvalidArgument);
}

TEST_CASE("collection distance closed forms") {
    const auto grid1 = LabelGrid({0.5}, {1.0});
    MeasureCollection mu(grid1, {EmpiricalMeasure::dirac1d(0.0)});
    MeasureCollection nu(grid1, {EmpiricalMeasure::dirac1d(2.0)});
    CHECK(collection_distance(mu, mu) == 0.0);
    CHECK(collection_distance(mu, nu) == doctest::Approx(2.0).epsilon(1e-14));

    const auto grid2 = LabelGrid({0.25, 0.75}, {0.5, 0.5});
    MeasureCollection a(grid2, {EmpiricalMeasure::dirac1d(0.0), EmpiricalMeasure::dirac1d(0.0)});
    MeasureCollection b(grid2, {EmpiricalMeasure::dirac1d(1.0), EmpiricalMeasure::dirac1d(3.0)});
    CHECK(collection_distance(a, b) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));

    const auto grid3 = LabelGrid::uniform(3);
    MeasureCollection c(grid3, {EmpiricalMeasure::dirac1d(0.0), EmpiricalMeasure::dirac1d(0.0),
                                EmpiricalMeasure::dirac1d(0.0)});
    CHECK_THROWS_AS(collection_distance(a, c), InvalidArgument);
}

TEST_CASE("collection metric axioms on random instances") {
    const auto grid = LabelGrid({0.2, 0.5, 0.9}, {0.3, 0.5, 0.2});
    auto random_collection = [&](std::uint64_t tag) {
        std::vector<EmpiricalMeasure> per_label;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            per_label.push_back(testing::random_cloud(5, 1, 99, tag * 13 + k, true));
        }
        return MeasureCollection(grid, std::move(per_label));
    };
    for (std::uint64_t trial = 0; trial < 25; ++trial) {
        const auto a = random_collection(3 * trial);
        const auto b = random_collection(3 * trial + 1);
        const auto c = random_collection(3 * trial + 2);
        const double ab = collection_distance(a, b);
        const double ba = collection_distance(b, a);
        CHECK(ab == ba);  // symmetry exact
        CHECK(collection_distance(a, a) == 0.0);
        CHECK(ab <= collection_distance(a, c) + collection_distance(c, b) + 1e-9);
    }
}

TEST_CASE("moments against a naive loop") {
    const auto grid = LabelGrid::uniform(2);
    MeasureCollection diracs(grid,
                             {EmpiricalMeasure::dirac1d(3.0), EmpiricalMeasure::dirac1d(-1.0)});
    auto moms = diracs.moments();
    CHECK(moms.mean[0][0] == doctest::Approx(3.0));
    CHECK(moms.mean[1][0] == doctest::Approx(-1.0));

    MeasureCollection pm1(grid, {EmpiricalMeasure(1, {-1.0, 1.0}), EmpiricalMeasure(1, {-1.0, 1.0})});
    moms = pm1.moments();
    CHECK(moms.mean[0][0] == doctest::Approx(0.0));
    CHECK(moms.second[0][0] == doctest::Approx(1.0));

    const auto cloud = testing::random_cloud(64, 2, 7, 5, true);
    MeasureCollection rc(LabelGrid({0.5}, {1.0}), {cloud});
    moms = rc.moments();
    double m0 = 0.0, m1 = 0.0, s0 = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        m0 += cloud.weight(i) * cloud.atom(i)[0];
        m1 += cloud.weight(i) * cloud.atom(i)[1];
        s0 += cloud.weight(i) * cloud.atom(i)[0] * cloud.atom(i)[0];
    }
    CHECK(moms.mean[0][0] == doctest::Approx(m0).epsilon(1e-12));
    CHECK(moms.mean[0][1] == doctest::Approx(m1).epsilon(1e-12));
    CHECK(moms.second[0][0] == doctest::Approx(s0).epsilon(1e-12));
}

TEST_CASE("graphon rows, degrees and the neighborhood mixture") {
    const auto grid = LabelGrid({0.5, 1.0}, {0.5, 0.5});
    MeasureCollection mu(grid, {EmpiricalMeasure::dirac1d(1.0), EmpiricalMeasure::dirac1d(3.0)});

    SUBCASE("constant graphon is the homogeneous mean field") {
        const auto g = Graphon::constant(grid);
        const auto nbhd = graphon_neighborhood(g, mu, 0);
        CHECK(nbhd.mean()[0] == doctest::Approx(2.0).epsilon(1e-14));
        double wsum = 0.0;
        for (std::size_t i = 0; i < nbhd.size(); ++i) wsum += nbhd.weight(i);
        CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("identity graphon returns the own-label measure") {
        const auto g = Graphon::identity(grid);
        const auto nbhd = graphon_neighborhood(g, mu, 1);
        CHECK(nbhd.size() == 1);
        CHECK(nbhd.atom(0)[0] == doctest::Approx(3.0));
    }
    SUBCASE("product kernel quadrature: frozen hand value") {
        const auto g = Graphon::product(grid);
        // weights prop to G(0.5, v) lambda_v: {0.125, 0.25} -> {1/3, 2/3};
        // mixture mean = 1/3 + 2 = 7/3
        const auto nbhd = graphon_neighborhood(g, mu, 0);
        CHECK(nbhd.mean()[0] == doctest::Approx(7.0 / 3.0).epsilon(1e-13));
        CHECK(g.row_degree(0) == doctest::Approx(0.5 * 0.25 + 0.5 * 0.5).epsilon(1e-14));
    }
    SUBCASE("zero-degree rows error unless the caller opts into delta_0") {
        std::vector<double> dense = {0.0, 0.0, 1.0, 1.0};
        const auto g = Graphon::from_matrix(grid, dense);
        CHECK_THROWS_AS(graphon_neighborhood(g, mu, 0), InvalidArgument);
        const auto fallback = graphon_neighborhood(g, mu, 0, ZeroDegreePolicy::kDiracOrigin);
        CHECK(fallback.mean()[0] == 0.0);
    }
    SUBCASE("kernel values outside [0,1] rejected") {
        CHECK_THROWS_AS(Graphon::from_matrix(grid, {0.5, 1.5, 0.0, 0.0}), InvalidArgument);
    }
}

TEST_CASE("neighborhood map is 1-Lipschitz for fixed mixture weights") {
    const auto grid = LabelGrid({0.2, 0.6, 0.9}, {0.4, 0.4, 0.2});
    const auto g = Graphon::product(grid);
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        std::vector<EmpiricalMeasure> base, shifted;
        std::vector<double> per_label_shift2(grid.size());
        double coupled2 = 0.0;
        const auto mix = g.mixture_weights(1);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            auto cloud = testing::random_cloud(6, 1, 123, trial * 7 + k);
            std::vector<double> moved = cloud.atoms_flat();
            const double delta =
                0.5 * rng::normal(9, rng::kProbeDomain, k, trial, 0, 0);
            for (double& x : moved) x += delta;
            per_label_shift2[k] = delta * delta;
            coupled2 += mix[k] * per_label_shift2[k];
            base.push_back(cloud);
            shifted.push_back(EmpiricalMeasure(1, std::move(moved)));
        }
        MeasureCollection mu(grid, base), nu(grid, shifted);
        const double lhs = wasserstein2(graphon_neighborhood(g, mu, 1),
                                        graphon_neighborhood(g, nu, 1));
        CHECK(lhs <= std::sqrt(coupled2) + 1e-12);
    }
}

TEST_CASE("initial sampling via quantile maps") {
    const auto grid = LabelGrid({0.25, 0.75}, {0.5, 0.5});
    SUBCASE("constant zero map lands on the origin collection") {
        const auto mc = sample_initial(quantile_maps::constant({0.0}), grid, 1, 16, 5);
        MeasureCollection zero(grid, {EmpiricalMeasure(1, std::vector<double>(16, 0.0)),
                                      EmpiricalMeasure(1, std::vector<double>(16, 0.0))});
        CHECK(collection_distance(mc, zero) == 0.0);
    }
    SUBCASE("standard normal sample means obey the CLT envelope") {
        const std::size_t n = 100000;
        const auto mc =
            sample_initial(quantile_maps::gaussian(0.0, 0.0, 1.0, 0.0, 1), grid, 1, n, 404);
        const auto moms = mc.moments();
        const double bound = 3.0 / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(moms.mean[0][0]) <= bound);
        CHECK(std::abs(moms.mean[1][0]) <= bound);
    }
    SUBCASE("label-dependent deterministic map gives per-label diracs") {
        const auto mc = sample_initial(quantile_maps::label_value(1), grid, 1, 8, 5);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            for (std::size_t i = 0; i < mc.measure(k).size(); ++i) {
                CHECK(mc.measure(k).atom(i)[0] == grid.label(k));
            }
        }
    }
    SUBCASE("non-finite quantile output is an error") {
        auto bad = [](double, double, std::span<double> out) { out[0] = std::nan(""); };
        CHECK_THROWS_AS(make_ensemble(bad, grid, 1, 4, 1), NumericalFailure);
    }
    SUBCASE("deterministic given seed") {
        const auto a = sample_initial(quantile_maps::gaussian(0.0, 0.0, 1.0, 0.0, 1), grid, 1, 32, 7);
        const auto b = sample_initial(quantile_maps::gaussian(0.0, 0.0, 1.0, 0.0, 1), grid, 1, 32, 7);
        CHECK(collection_distance(a, b) == 0.0);
    }
}

TEST_CASE("snapshot marginal distance is dominated by the path distance") {
    const auto grid = LabelGrid::uniform(2);
    const std::size_t n = 8, steps = 5;
    std::vector<double> times;
    for (std::size_t j = 0; j <= steps; ++j) times.push_back(0.1 * static_cast<double>(j));
    auto make_flow = [&](std::uint64_t tag) {
        std::vector<std::vector<double>> trajectories(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            trajectories[k].resize((steps + 1) * n);
            for (std::size_t j = 0; j <= steps; ++j) {
                for (std::size_t i = 0; i < n; ++i) {
                    trajectories[k][j * n + i] =
                        rng::normal(tag, rng::kProbeDomain, k, i, j, 0);
                }
            }
        }
        return MeasureFlow::path_coupled(times, grid, 1, n, std::move(trajectories));
    };
    const auto f1 = make_flow(21), f2 = make_flow(22);
    const double path = path_coupled_distance(f1, f2);
    for (std::size_t j = 0; j <= steps; ++j) {
        CHECK(collection_distance(f1.collection_at(j), f2.collection_at(j)) <= path + 1e-12);
    }
}
