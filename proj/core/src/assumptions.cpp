#include "graphon_mfc/assumptions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "graphon_mfc/numeric.hpp"
#include "graphon_mfc/rng.hpp"
#include "graphon_mfc/wasserstein.hpp"

namespace gmfc {

double gronwall_stability_constant(double lipschitz, double horizon, double lambda_total) {
    const double c = 2.0 * lipschitz * lipschitz * (3.0 * horizon + 12.0) * (1.0 + lambda_total);
    return 3.0 * std::exp(c * horizon);
}

double gronwall_second_moment_constant(double growth, double horizon, double lambda_total) {
    const double c = 5.0 * growth * growth * (3.0 * horizon + 12.0) * (1.0 + lambda_total);
    return (3.0 + c * horizon + c) * std::exp(c * horizon);
}

double gronwall_strengthened_constant(double growth, double horizon, double lambda_total) {
    const double c = 3.0 * growth * growth * (3.0 * horizon + 12.0) * (1.0 + lambda_total);
    return (3.0 + c * horizon) * std::exp(c * horizon);
}

double contraction_bound_constant(double lipschitz, double horizon, double lambda_total) {
    const double c = 2.0 * lipschitz * lipschitz * (3.0 * horizon + 12.0) * (1.0 + lambda_total);
    return c * std::exp(c * horizon);
}

namespace {

// Random collection of per-label Gaussian clouds for probe sampling.
MeasureCollection random_collection(const LabelGrid& grid, std::size_t dim, std::size_t atoms,
                                    std::uint64_t seed, std::uint64_t tag) {
    std::vector<EmpiricalMeasure> per_label;
    per_label.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double mean =
            2.0 * rng::uniform_open(seed, rng::kProbeDomain, k, tag, 0, 0) - 1.0;
        const double sd = 0.2 + rng::uniform_open(seed, rng::kProbeDomain, k, tag, 0, 1);
        std::vector<double> xs(atoms * dim);
        for (std::size_t i = 0; i < atoms; ++i) {
            for (std::size_t c = 0; c < dim; ++c) {
                xs[i * dim + c] =
                    mean + sd * rng::normal(seed, rng::kProbeDomain, k, tag, i + 1, c);
            }
        }
        per_label.emplace_back(dim, std::move(xs));
    }
    return MeasureCollection(grid, std::move(per_label));
}

MeasureCollection random_action_collection(const ActionBox& box, const LabelGrid& grid,
                                           std::size_t atoms, std::uint64_t seed,
                                           std::uint64_t tag) {
    const std::size_t q = box.dim();
    std::vector<EmpiricalMeasure> per_label;
    per_label.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        std::vector<double> xs(atoms * q);
        for (std::size_t i = 0; i < atoms; ++i) {
            for (std::size_t c = 0; c < q; ++c) {
                const double z = rng::uniform_open(seed, rng::kProbeDomain, k, tag + 7, i, c);
                xs[i * q + c] = box.lo[c] + z * (box.hi[c] - box.lo[c]);
            }
        }
        per_label.emplace_back(q, std::move(xs));
    }
    return MeasureCollection(grid, std::move(per_label));
}

double vec_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double vec_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += sq(a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

AssumptionReport validate_coefficients(const CoefficientSet& coeffs, std::size_t probe_budget,
                                       std::uint64_t seed) {
    if (probe_budget == 0) throw InvalidArgument("validate_coefficients: probe_budget >= 1");
    const LabelGrid& grid = coeffs.grid;
    const std::size_t d = coeffs.state_dim;
    const std::size_t ell = coeffs.noise_dim;
    const std::size_t q = coeffs.action_dim;
    const Graphon* graphon = coeffs.uses_neighborhood ? coeffs.graphon.get() : nullptr;

    AssumptionReport report;
    report.samples = probe_budget;

    std::vector<double> x(d), xp(d), a(q);
    std::vector<double> b1(d), b2(d), s1(d * ell), s2(d * ell);

    for (std::size_t probe = 0; probe < probe_budget; ++probe) {
        const std::uint64_t tag = probe * 16;
        for (std::size_t c = 0; c < d; ++c) {
            x[c] = 2.0 * rng::normal(seed, rng::kProbeDomain, 101, tag, 1, c);
            xp[c] = 2.0 * rng::normal(seed, rng::kProbeDomain, 101, tag, 2, c);
        }
        for (std::size_t c = 0; c < q; ++c) {
            const double z = rng::uniform_open(seed, rng::kProbeDomain, 101, tag, 3, c);
            a[c] = coeffs.action_space.lo[c] +
                   z * (coeffs.action_space.hi[c] - coeffs.action_space.lo[c]);
        }
        const MeasureCollection mu = random_collection(grid, d, 16, seed, tag + 1);
        const MeasureCollection mup = random_collection(grid, d, 16, seed, tag + 2);
        const MeasureCollection nu = random_action_collection(coeffs.action_space, grid, 8,
                                                              seed, tag + 3);
        const double dd = collection_distance(mu, mup);
        const double d_mu0 = std::sqrt(mu.squared_norm());
        const double d_mup0 = std::sqrt(mup.squared_norm());
        const double d_nu0 = std::sqrt(nu.squared_norm());
        const double a_norm = vec_norm(a);

        MeasureView mu_view = MeasureView::of_collection(mu, graphon);
        MeasureView mup_view = MeasureView::of_collection(mup, graphon);
        MeasureView nu_view = MeasureView::of_collection(nu, nullptr);
        const EvalContext ctx(&mu_view, &nu_view);
        const EvalContext ctxp(&mup_view, &nu_view);
        const std::size_t u = probe % grid.size();
        const double t = 0.0;

        coeffs.drift(u, t, x, a, ctx, b1);
        coeffs.drift(u, t, xp, a, ctxp, b2);
        coeffs.volatility(u, t, x, a, ctx, s1);
        coeffs.volatility(u, t, xp, a, ctxp, s2);

        const double denom_lip = vec_dist(x, xp) + dd;
        if (denom_lip > 1e-9) {
            report.lipschitz_b = std::max(report.lipschitz_b, vec_dist(b1, b2) / denom_lip);
            report.lipschitz_sigma =
                std::max(report.lipschitz_sigma, vec_dist(s1, s2) / denom_lip);
        }

        const double size = vec_norm(b1) + vec_norm(s1);
        report.growth = std::max(
            report.growth, size / (1.0 + vec_norm(x) + a_norm + d_mu0 + d_nu0));
        if (coeffs.strengthened_growth) {
            report.strengthened_growth =
                std::max(report.strengthened_growth, size / (1.0 + vec_norm(x) + d_mu0));
        }

        if (coeffs.running_cost) {
            const double f1 = coeffs.running_cost(u, t, x, a, ctx);
            const double f2 = coeffs.running_cost(u, t, xp, a, ctxp);
            const auto& g = coeffs.constants.gamma;
            const double denom =
                std::pow(vec_dist(x, xp), g[0]) *
                    std::pow(1.0 + vec_norm(x) + vec_norm(xp), 2.0 - g[0]) +
                std::pow(dd, g[1]) * std::pow(1.0 + d_mu0 + d_mup0, 2.0 - g[1]);
            if (denom > 1e-9) {
                report.holder_f = std::max(report.holder_f, std::abs(f1 - f2) / denom);
            }
        }
        if (coeffs.terminal_cost) {
            const double g1 = coeffs.terminal_cost(u, x, ctx);
            const double g2 = coeffs.terminal_cost(u, xp, ctxp);
            const auto& g = coeffs.constants.gamma;
            const double denom =
                std::pow(vec_dist(x, xp), g[2]) *
                    std::pow(1.0 + vec_norm(x) + vec_norm(xp), 2.0 - g[2]) +
                std::pow(dd, g[3]) * std::pow(1.0 + d_mu0 + d_mup0, 2.0 - g[3]);
            if (denom > 1e-9) {
                report.holder_g = std::max(report.holder_g, std::abs(g1 - g2) / denom);
            }
        }
    }

    const double slack = 1.0 + 1e-9;
    report.lipschitz_ok =
        std::max(report.lipschitz_b, report.lipschitz_sigma) <= coeffs.constants.lipschitz * slack + 1e-12;
    report.growth_ok = report.growth <= coeffs.constants.growth * slack + 1e-12;
    report.strengthened_ok = !coeffs.strengthened_growth ||
                             report.strengthened_growth <= coeffs.constants.growth * slack + 1e-12;
    report.holder_ok =
        std::max(report.holder_f, report.holder_g) <= coeffs.constants.holder * slack + 1e-12;
    return report;
}

StabilityReport stability_probe(const CoefficientSet& coeffs, const Policy& policy,
                                const ParticleEnsemble& init_a, const ParticleEnsemble& init_b,
                                double t0, double T, std::size_t steps, std::uint64_t seed) {
    if (!(init_a.grid() == init_b.grid()) || init_a.dim() != init_b.dim() ||
        init_a.particles_per_label() != init_b.particles_per_label()) {
        throw InvalidArgument("stability_probe: ensembles must share grid, dim, particle count");
    }
    const std::size_t k_count = init_a.grid().size();
    const std::size_t n = init_a.particles_per_label();
    for (std::size_t k = 0; k < k_count; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            if (init_a.stream_id(k, i) != init_b.stream_id(k, i)) {
                throw InvalidArgument("stability_probe: noise stream mismatch between ensembles");
            }
        }
    }

    SimOptions opts;
    opts.store_paths = true;
    const SimulationResult res_a = simulate(coeffs, policy, init_a, t0, T, steps, seed, opts);
    const SimulationResult res_b = simulate(coeffs, policy, init_b, t0, T, steps, seed, opts);

    const LabelGrid& grid = init_a.grid();
    const std::size_t d = init_a.dim();
    KahanSum lhs_acc, rhs_acc, moment_acc, xi_acc;
    for (std::size_t k = 0; k < k_count; ++k) {
        KahanSum lhs_label, rhs_label, mom_label, xi_label;
        for (std::size_t i = 0; i < n; ++i) {
            double worst = 0.0, worst_abs = 0.0;
            for (std::size_t j = 0; j <= steps; ++j) {
                const auto xa = res_a.flow.state_block(k, j);
                const auto xb = res_b.flow.state_block(k, j);
                double dist2 = 0.0, abs2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    dist2 += sq(xa[i * d + c] - xb[i * d + c]);
                    abs2 += sq(xa[i * d + c]);
                }
                worst = std::max(worst, dist2);
                worst_abs = std::max(worst_abs, abs2);
            }
            lhs_label.add(worst);
            mom_label.add(worst_abs);
            double init_dist2 = 0.0, init_abs2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                init_dist2 += sq(init_a.state(k, i)[c] - init_b.state(k, i)[c]);
                init_abs2 += sq(init_a.state(k, i)[c]);
            }
            rhs_label.add(init_dist2);
            xi_label.add(init_abs2);
        }
        const double w = grid.weight(k) / static_cast<double>(n);
        lhs_acc.add(w * lhs_label.value());
        rhs_acc.add(w * rhs_label.value());
        moment_acc.add(w * mom_label.value());
        xi_acc.add(w * xi_label.value());
    }

    StabilityReport report;
    report.lhs = lhs_acc.value();
    report.rhs = rhs_acc.value();
    report.c_hat = report.rhs > 0.0 ? report.lhs / report.rhs : 0.0;

    const double horizon = T - t0;
    const double effective_l =
        coeffs.constants.lipschitz + coeffs.lipschitz_in_action * policy.lipschitz_in_x();
    report.gronwall_bound =
        gronwall_stability_constant(effective_l, horizon, grid.total_mass());

    report.moment_lhs = moment_acc.value();
    const double xi = xi_acc.value();
    const double admissibility = res_a.diagnostics.action_square_integral;
    report.moment_rhs =
        gronwall_second_moment_constant(coeffs.constants.growth, horizon, grid.total_mass()) *
        (1.0 + xi + admissibility);
    if (coeffs.strengthened_growth) {
        report.strengthened_rhs =
            gronwall_strengthened_constant(coeffs.constants.growth, horizon, grid.total_mass()) *
            (1.0 + xi);
    }
    return report;
}

LawInvarianceReport law_invariance_test(const CoefficientSet& coeffs, const Policy& policy,
                                        const ParticleEnsemble& init, PermutationScheme scheme,
                                        const QuantileMap& quantile_map, double t0, double T,
                                        std::size_t steps, std::uint64_t sim_seed,
                                        std::size_t replications, std::uint64_t scheme_seed) {
    SimOptions opts;
    opts.store_paths = false;
    const SimulationResult base = simulate(coeffs, policy, init, t0, T, steps, sim_seed, opts);
    const CostEstimate base_cost = cost(coeffs, base);

    LawInvarianceReport report;
    report.exact_scheme =
        scheme == PermutationScheme::kIdentity || scheme == PermutationScheme::kShuffleStreams;

    const std::size_t k_count = init.grid().size();
    const std::size_t n = init.particles_per_label();
    for (std::size_t rep = 0; rep < replications; ++rep) {
        ParticleEnsemble permuted = init;
        if (scheme == PermutationScheme::kShuffleStreams) {
            for (std::size_t k = 0; k < k_count; ++k) {
                // Fisher-Yates from the scheme's counter stream
                std::vector<std::size_t> perm(n);
                std::iota(perm.begin(), perm.end(), 0);
                for (std::size_t i = n - 1; i > 0; --i) {
                    const double z =
                        rng::uniform_open(scheme_seed, rng::kProbeDomain, k, rep, i, 9);
                    const std::size_t j = static_cast<std::size_t>(z * static_cast<double>(i + 1));
                    std::swap(perm[i], perm[std::min(j, i)]);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t src = perm[i];
                    for (std::size_t c = 0; c < init.dim(); ++c) {
                        permuted.state(k, i)[c] = init.state(k, src)[c];
                    }
                    permuted.set_stream_id(k, i, init.stream_id(k, src));
                    permuted.set_uniform_mark(k, i, init.uniform_mark(k, src));
                }
            }
        } else if (scheme == PermutationScheme::kRedrawMarks) {
            if (!quantile_map) {
                throw InvalidArgument("law_invariance_test: redraw scheme needs a quantile map");
            }
            for (std::size_t k = 0; k < k_count; ++k) {
                for (std::size_t i = 0; i < n; ++i) {
                    const double z =
                        rng::uniform_open(scheme_seed, rng::kInitDomain, k, i, rep + 1, 1);
                    permuted.set_uniform_mark(k, i, z);
                    quantile_map(init.grid().label(k), z, permuted.state(k, i));
                }
            }
        }
        const SimulationResult alt = simulate(coeffs, policy, permuted, t0, T, steps, sim_seed, opts);
        const CostEstimate alt_cost = cost(coeffs, alt);
        const double disc = std::abs(alt_cost.value - base_cost.value);
        const double se = std::sqrt(sq(base_cost.std_error) + sq(alt_cost.std_error));
        report.discrepancy.push_back(disc);
        report.pooled_se.push_back(se);
        report.max_abs_discrepancy = std::max(report.max_abs_discrepancy, disc);
        if (se > 0.0) {
            report.max_discrepancy_over_se = std::max(report.max_discrepancy_over_se, disc / se);
        }
    }
    return report;
}

}  // namespace gmfc
