#include "graphon_mfc/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "graphon_mfc/numeric.hpp"
#include "graphon_mfc/rng.hpp"

namespace gmfc {

TimeWindow TimeWindow::span(double t0, double t1, std::size_t steps) {
    if (!(t1 > t0)) throw InvalidArgument("TimeWindow: need t1 > t0");
    if (steps == 0) throw InvalidArgument("TimeWindow: need steps >= 1");
    TimeWindow w;
    w.base = t0;
    w.dt = (t1 - t0) / static_cast<double>(steps);
    w.offset = 0;
    w.steps = steps;
    return w;
}

TimeWindow TimeWindow::continuation(std::size_t more_steps) const {
    TimeWindow w = *this;
    w.offset = offset + steps;
    w.steps = more_steps;
    return w;
}

namespace detail {
namespace {

std::vector<CloudView> clouds_of_states(const std::vector<std::vector<double>>& states,
                                        std::size_t n) {
    std::vector<CloudView> clouds(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        clouds[k] = {states[k].data(), nullptr, n};
    }
    return clouds;
}

std::vector<CloudView> clouds_of_frozen(const MeasureFlow& flow, std::size_t step) {
    std::vector<CloudView> clouds(flow.grid().size());
    for (std::size_t k = 0; k < flow.grid().size(); ++k) {
        const auto block = flow.state_block(k, step);
        clouds[k] = {block.data(), nullptr, flow.particles_per_label()};
    }
    return clouds;
}

void check_frozen_compatible(const MeasureFlow& nu, const CoefficientSet& coeffs,
                             const TimeWindow& window) {
    if (!nu.is_path_coupled()) {
        throw InvalidArgument("frozen flow must be path-coupled");
    }
    if (!(nu.grid() == coeffs.grid) || nu.dim() != coeffs.state_dim) {
        throw InvalidArgument("frozen flow grid/dimension mismatch");
    }
    if (nu.time_grid().size() != window.steps + 1) {
        throw InvalidArgument("frozen flow time grid does not match the simulation window");
    }
    for (std::size_t j = 0; j <= window.steps; ++j) {
        const double t = window.time_at(j);
        if (std::abs(nu.time_grid()[j] - t) > 1e-12 * std::max(1.0, std::abs(t))) {
            throw InvalidArgument("frozen flow time grid does not match the simulation window");
        }
    }
}

}  // namespace

SimulationResult simulate_impl(const CoefficientSet& coeffs, const Policy& policy,
                               const ParticleEnsemble& init, const TimeWindow& window,
                               std::uint64_t seed, const SimOptions& opts,
                               const MeasureFlow* frozen_states) {
    if (window.steps == 0 || !(window.dt > 0.0)) {
        throw InvalidArgument("simulate: need steps >= 1 and dt > 0");
    }
    if (!(init.grid() == coeffs.grid)) throw InvalidArgument("simulate: ensemble grid mismatch");
    if (init.dim() != coeffs.state_dim) {
        throw InvalidArgument("simulate: ensemble dimension mismatch");
    }
    if (frozen_states != nullptr) check_frozen_compatible(*frozen_states, coeffs, window);
    if (!coeffs.drift || !coeffs.volatility) {
        throw InvalidArgument("simulate: coefficient set missing drift or volatility");
    }
    if (coeffs.noise_dim > 8) {
        throw InvalidArgument("simulate: noise_dim > 8 is not supported");
    }

    const LabelGrid& grid = coeffs.grid;
    const std::size_t k_count = grid.size();
    const std::size_t n = init.particles_per_label();
    const std::size_t d = coeffs.state_dim;
    const std::size_t ell = coeffs.noise_dim;
    const std::size_t q = coeffs.action_dim;
    const std::size_t sub = std::max<std::size_t>(1, window.noise_substeps);
    const double dt = window.dt;
    const double sub_sd = std::sqrt(dt / static_cast<double>(sub));
    const Graphon* graphon = coeffs.uses_neighborhood ? coeffs.graphon.get() : nullptr;
    if (coeffs.uses_neighborhood && graphon == nullptr) {
        throw InvalidArgument("simulate: coefficients request neighborhood aggregates but no graphon is set");
    }

    std::vector<std::vector<double>> cur(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        const auto s = init.states(k);
        cur[k].assign(s.begin(), s.end());
    }

    std::vector<std::vector<double>> paths;
    if (opts.store_paths) {
        paths.assign(k_count, {});
        for (std::size_t k = 0; k < k_count; ++k) {
            paths[k].reserve((window.steps + 1) * n * d);
            paths[k].insert(paths[k].end(), cur[k].begin(), cur[k].end());
        }
    }

    SimulationResult result;
    result.window = window;
    result.seed = seed;
    result.initial_ensemble = init;
    result.run_cost_pre.assign(k_count, std::vector<double>(n, 0.0));
    result.run_cost_post.assign(k_count, std::vector<double>(n, 0.0));
    result.terminal_cost.assign(k_count, std::vector<double>(n, 0.0));
    if (opts.store_action_flow) result.action_flow.emplace();

    std::vector<std::vector<double>> actions(k_count, std::vector<double>(n * q, 0.0));
    std::vector<std::vector<double>> drifts(k_count, std::vector<double>(n * d, 0.0));
    std::vector<std::vector<double>> vols(k_count, std::vector<double>(n * d * ell, 0.0));

    KahanSum action_l2;
    double max_abs = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
        for (double x : cur[k]) max_abs = std::max(max_abs, std::abs(x));
    }

    const bool needs_action_law = !coeffs.nu_independent;
    for (std::size_t step = 0; step < window.steps; ++step) {
        const double t = window.time_at(step);
        const std::size_t global_step = window.offset + step;

        MeasureView state_view =
            frozen_states != nullptr
                ? MeasureView(&grid, d, clouds_of_frozen(*frozen_states, step), graphon)
                : MeasureView(&grid, d, clouds_of_states(cur, n), graphon);
        EvalContext state_ctx(&state_view, nullptr);

        for (std::size_t k = 0; k < k_count; ++k) {
            double* a_base = actions[k].data();
            const double* x_base = cur[k].data();
#pragma omp parallel for schedule(static)
            for (long long i = 0; i < static_cast<long long>(n); ++i) {
                policy.evaluate(k, t, global_step, {x_base + i * d, d},
                                init.uniform_mark(k, static_cast<std::size_t>(i)), state_ctx,
                                {a_base + i * q, q});
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (!coeffs.action_space.contains({a_base + i * q, q})) {
                    throw InvalidArgument("simulate: policy action outside the action space at step " +
                                          std::to_string(global_step));
                }
            }
        }

        MeasureView action_view;
        if (needs_action_law || opts.store_action_flow) {
            action_view = MeasureView(&grid, q, clouds_of_states(actions, n), nullptr);
            if (opts.store_action_flow) {
                result.action_flow->push_back(action_view.materialize());
            }
        }
        EvalContext ctx(&state_view, needs_action_law ? &action_view : nullptr);

        {
            KahanSum step_a2;
            for (std::size_t k = 0; k < k_count; ++k) {
                KahanSum label_a2;
                for (double a : actions[k]) label_a2.add(a * a);
                step_a2.add(grid.weight(k) * label_a2.value() / static_cast<double>(n));
            }
            action_l2.add(dt * step_a2.value());
        }

        const bool pre_bucket = step < opts.cost_checkpoint;
        for (std::size_t k = 0; k < k_count; ++k) {
            double* b_base = drifts[k].data();
            double* s_base = vols[k].data();
            const double* x_base = cur[k].data();
            const double* a_base = actions[k].data();
            double* cost_base =
                pre_bucket ? result.run_cost_pre[k].data() : result.run_cost_post[k].data();
            const bool has_f = static_cast<bool>(coeffs.running_cost);
#pragma omp parallel for schedule(static)
            for (long long i = 0; i < static_cast<long long>(n); ++i) {
                const std::span<const double> x{x_base + i * d, d};
                const std::span<const double> a{a_base + i * q, q};
                coeffs.drift(k, t, x, a, ctx, {b_base + i * d, d});
                coeffs.volatility(k, t, x, a, ctx, {s_base + i * d * ell, d * ell});
                if (has_f) cost_base[i] += dt * coeffs.running_cost(k, t, x, a, ctx);
            }
        }

        if (opts.observer) {
            StepData data;
            data.local_step = step;
            data.t = t;
            data.ctx = &ctx;
            data.labels = k_count;
            data.particles = n;
            data.dim = d;
            data.noise_dim = ell;
            data.action_dim = q;
            data.states = [&](std::size_t k) {
                return std::span<const double>{cur[k].data(), n * d};
            };
            data.drifts = [&](std::size_t k) {
                return std::span<const double>{drifts[k].data(), n * d};
            };
            data.vols = [&](std::size_t k) {
                return std::span<const double>{vols[k].data(), n * d * ell};
            };
            data.actions = [&](std::size_t k) {
                return std::span<const double>{actions[k].data(), n * q};
            };
            opts.observer(data);
        }

        double step_max = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            double* x_base = cur[k].data();
            const double* b_base = drifts[k].data();
            const double* s_base = vols[k].data();
            double label_max = 0.0;
#pragma omp parallel for schedule(static) reduction(max : label_max)
            for (long long i = 0; i < static_cast<long long>(n); ++i) {
                const std::uint64_t stream = init.stream_id(k, static_cast<std::size_t>(i));
                double dw[8];  // noise_dim is small
                for (std::size_t c = 0; c < ell; ++c) {
                    double inc = 0.0;
                    for (std::size_t s = 0; s < sub; ++s) {
                        inc += rng::normal(seed, rng::kNoiseDomain, k, stream,
                                           global_step * sub + s, c);
                    }
                    dw[c] = inc * sub_sd;
                }
                for (std::size_t r = 0; r < d; ++r) {
                    double x = x_base[i * d + r] + b_base[i * d + r] * dt;
                    for (std::size_t c = 0; c < ell; ++c) {
                        x += s_base[(i * d + r) * ell + c] * dw[c];
                    }
                    x_base[i * d + r] = x;
                    label_max = std::max(label_max, std::abs(x));
                }
            }
            step_max = std::max(step_max, label_max);
        }
        max_abs = std::max(max_abs, step_max);
        if (!(step_max <= opts.blowup_guard) || !std::isfinite(step_max)) {
            throw NumericalFailure("simulate: state blow-up at step " +
                                   std::to_string(global_step) + " (|X| = " +
                                   std::to_string(step_max) + ")");
        }

        if (opts.store_paths) {
            for (std::size_t k = 0; k < k_count; ++k) {
                paths[k].insert(paths[k].end(), cur[k].begin(), cur[k].end());
            }
        }
    }

    // terminal states, costs, flow assembly
    MeasureView final_view =
        frozen_states != nullptr
            ? MeasureView(&grid, d, clouds_of_frozen(*frozen_states, window.steps), graphon)
            : MeasureView(&grid, d, clouds_of_states(cur, n), graphon);
    EvalContext final_ctx(&final_view, nullptr);
    if (opts.include_terminal_cost && coeffs.terminal_cost) {
        for (std::size_t k = 0; k < k_count; ++k) {
            double* g_base = result.terminal_cost[k].data();
            const double* x_base = cur[k].data();
#pragma omp parallel for schedule(static)
            for (long long i = 0; i < static_cast<long long>(n); ++i) {
                g_base[i] = coeffs.terminal_cost(k, {x_base + i * d, d}, final_ctx);
            }
        }
    }

    result.final_ensemble = init;
    for (std::size_t k = 0; k < k_count; ++k) {
        auto dst = result.final_ensemble.states(k);
        std::copy(cur[k].begin(), cur[k].end(), dst.begin());
    }

    std::vector<double> time_grid(window.steps + 1);
    for (std::size_t j = 0; j <= window.steps; ++j) time_grid[j] = window.time_at(j);
    if (opts.store_paths) {
        result.flow = MeasureFlow::path_coupled(std::move(time_grid), grid, d, n, std::move(paths));
    } else {
        std::vector<MeasureCollection> endpoints;
        endpoints.push_back(init.collection());
        endpoints.push_back(result.final_ensemble.collection());
        result.flow = MeasureFlow::from_snapshots({time_grid.front(), time_grid.back()},
                                                  std::move(endpoints));
    }

    result.diagnostics.max_abs_state = max_abs;
    result.diagnostics.steps = window.steps;
    result.diagnostics.action_square_integral = action_l2.value();
    return result;
}

}  // namespace detail

SimulationResult simulate(const CoefficientSet& coeffs, const Policy& policy,
                          const ParticleEnsemble& init, const TimeWindow& window,
                          std::uint64_t seed, const SimOptions& opts) {
    return detail::simulate_impl(coeffs, policy, init, window, seed, opts, nullptr);
}

CostEstimate cost(const CoefficientSet& coeffs, const SimulationResult& result) {
    const LabelGrid& grid = coeffs.grid;
    const std::size_t k_count = grid.size();
    if (result.run_cost_pre.size() != k_count) {
        throw InvalidArgument("cost: result does not match the coefficient grid");
    }
    const std::size_t n = result.run_cost_pre[0].size();
    KahanSum value_acc;
    KahanSum var_acc;
    for (std::size_t k = 0; k < k_count; ++k) {
        KahanSum mean_acc;
        for (std::size_t i = 0; i < n; ++i) {
            mean_acc.add(result.run_cost_pre[k][i] + result.run_cost_post[k][i] +
                         result.terminal_cost[k][i]);
        }
        const double mean = mean_acc.value() / static_cast<double>(n);
        KahanSum sq_acc;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = result.run_cost_pre[k][i] + result.run_cost_post[k][i] +
                             result.terminal_cost[k][i];
            sq_acc.add(sq(c - mean));
        }
        const double w = grid.weight(k);
        value_acc.add(w * mean);
        if (n > 1) {
            const double var_of_mean =
                sq_acc.value() / static_cast<double>(n - 1) / static_cast<double>(n);
            var_acc.add(w * w * var_of_mean);
        }
    }
    return {value_acc.value(), std::sqrt(std::max(0.0, var_acc.value()))};
}

}  // namespace gmfc
