#include "graphon_mfc/fixedpoint.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "graphon_mfc/assumptions.hpp"
#include "graphon_mfc/numeric.hpp"

namespace gmfc {

MeasureFlow constant_law_flow(const ParticleEnsemble& init, const TimeWindow& window) {
    const std::size_t k_count = init.grid().size();
    const std::size_t n = init.particles_per_label();
    const std::size_t d = init.dim();
    std::vector<double> time_grid(window.steps + 1);
    for (std::size_t j = 0; j <= window.steps; ++j) time_grid[j] = window.time_at(j);
    std::vector<std::vector<double>> trajectories(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        trajectories[k].reserve((window.steps + 1) * n * d);
        const auto s = init.states(k);
        for (std::size_t j = 0; j <= window.steps; ++j) {
            trajectories[k].insert(trajectories[k].end(), s.begin(), s.end());
        }
    }
    return MeasureFlow::path_coupled(std::move(time_grid), init.grid(), d, n,
                                     std::move(trajectories));
}

namespace {

MeasureFlow apply_psi_window(const CoefficientSet& coeffs, const Policy& policy,
                             const ParticleEnsemble& init, const MeasureFlow& nu,
                             const TimeWindow& window, std::uint64_t seed) {
    SimOptions opts;
    opts.store_paths = true;
    return detail::simulate_impl(coeffs, policy, init, window, seed, opts, &nu).flow;
}

TimeWindow window_of_flow(const MeasureFlow& nu) {
    const auto& tg = nu.time_grid();
    if (tg.size() < 2) throw InvalidArgument("apply_psi: flow needs at least two time points");
    TimeWindow w;
    w.base = tg.front();
    w.steps = tg.size() - 1;
    w.dt = (tg.back() - tg.front()) / static_cast<double>(w.steps);
    w.offset = 0;
    return w;
}

PicardResult picard_segment(const CoefficientSet& coeffs, const Policy& policy,
                            const ParticleEnsemble& init, const TimeWindow& window,
                            std::size_t max_iters, double tol, std::uint64_t seed) {
    MeasureFlow nu = constant_law_flow(init, window);
    PicardState state;
    double initial_distance = -1.0;
    std::size_t increases = 0;
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        MeasureFlow next = apply_psi_window(coeffs, policy, init, nu, window, seed);
        const double dist = path_coupled_distance(next, nu);
        state.distance_history.push_back(dist);
        if (state.distance_history.size() >= 2) {
            const double prev = state.distance_history[state.distance_history.size() - 2];
            state.contraction_ratios.push_back(prev > 0.0 ? dist / prev : 0.0);
        }
        state.iterate_index = iter + 1;
        nu = std::move(next);
        if (initial_distance < 0.0) initial_distance = dist;
        if (dist < tol) {
            state.converged = true;
            break;
        }
        if (state.distance_history.size() >= 2 &&
            dist > state.distance_history[state.distance_history.size() - 2]) {
            ++increases;
            if (increases >= 3 && dist > 10.0 * initial_distance) {
                throw NonConvergence(
                    "picard_solve: iterate distances diverging; the horizon likely exceeds "
                    "the contraction range of the declared Lipschitz constants");
            }
        } else {
            increases = 0;
        }
    }
    PicardResult result;
    result.state = std::move(state);
    result.flow = std::move(nu);
    result.state.current_flow = result.flow;
    return result;
}

ParticleEnsemble ensemble_at_flow_end(const ParticleEnsemble& init, const MeasureFlow& flow) {
    ParticleEnsemble out = init;
    const std::size_t last = flow.time_grid().size() - 1;
    for (std::size_t k = 0; k < init.grid().size(); ++k) {
        const auto block = flow.state_block(k, last);
        auto dst = out.states(k);
        std::copy(block.begin(), block.end(), dst.begin());
    }
    return out;
}

MeasureFlow concatenate_flows(const std::vector<MeasureFlow>& segments) {
    const std::size_t k_count = segments.front().grid().size();
    const std::size_t n = segments.front().particles_per_label();
    const std::size_t d = segments.front().dim();
    std::vector<double> time_grid;
    std::vector<std::vector<double>> trajectories(k_count);
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const auto& seg = segments[s];
        const std::size_t from = s == 0 ? 0 : 1;  // drop duplicated boundary point
        for (std::size_t j = from; j < seg.time_grid().size(); ++j) {
            time_grid.push_back(seg.time_grid()[j]);
            for (std::size_t k = 0; k < k_count; ++k) {
                const auto block = seg.state_block(k, j);
                trajectories[k].insert(trajectories[k].end(), block.begin(), block.end());
            }
        }
    }
    return MeasureFlow::path_coupled(std::move(time_grid), segments.front().grid(), d, n,
                                     std::move(trajectories));
}

}  // namespace

MeasureFlow apply_psi(const CoefficientSet& coeffs, const Policy& policy,
                      const ParticleEnsemble& init, const MeasureFlow& nu, std::uint64_t seed) {
    return apply_psi_window(coeffs, policy, init, nu, window_of_flow(nu), seed);
}

PicardResult picard_solve(const CoefficientSet& coeffs, const Policy& policy,
                          const ParticleEnsemble& init, double t0, double T, std::size_t steps,
                          std::uint64_t seed, const PicardOptions& opts) {
    if (opts.max_iters == 0) throw InvalidArgument("picard_solve: max_iters >= 1");
    if (!(opts.tol > 0.0)) throw InvalidArgument("picard_solve: tol > 0 required");
    const TimeWindow window = TimeWindow::span(t0, T, steps);

    std::size_t segments = 1;
    if (opts.auto_split) {
        const double lambda_total = coeffs.grid.total_mass();
        const double l = coeffs.constants.lipschitz +
                         coeffs.lipschitz_in_action * policy.lipschitz_in_x();
        double h = T - t0;
        while (segments < opts.max_segments &&
               contraction_bound_constant(l, h, lambda_total) * h > 0.5) {
            segments *= 2;
            h *= 0.5;
        }
        // keep segment boundaries on the step grid
        while (steps % segments != 0) segments /= 2;
    }

    if (segments <= 1) {
        PicardResult result =
            picard_segment(coeffs, policy, init, window, opts.max_iters, opts.tol, seed);
        return result;
    }

    const std::size_t steps_per_segment = steps / segments;
    std::vector<MeasureFlow> segment_flows;
    PicardState merged;
    ParticleEnsemble segment_init = init;
    bool all_converged = true;
    for (std::size_t s = 0; s < segments; ++s) {
        TimeWindow seg_window;
        seg_window.base = window.base;
        seg_window.dt = window.dt;
        seg_window.offset = s * steps_per_segment;
        seg_window.steps = steps_per_segment;
        merged.segment_starts.push_back(merged.distance_history.size());
        PicardResult seg = picard_segment(coeffs, policy, segment_init, seg_window,
                                          opts.max_iters, opts.tol, seed);
        all_converged = all_converged && seg.state.converged;
        merged.iterate_index += seg.state.iterate_index;
        merged.distance_history.insert(merged.distance_history.end(),
                                       seg.state.distance_history.begin(),
                                       seg.state.distance_history.end());
        merged.contraction_ratios.insert(merged.contraction_ratios.end(),
                                         seg.state.contraction_ratios.begin(),
                                         seg.state.contraction_ratios.end());
        segment_init = ensemble_at_flow_end(segment_init, seg.flow);
        segment_flows.push_back(std::move(seg.flow));
    }
    merged.converged = all_converged;
    PicardResult result;
    result.flow = concatenate_flows(segment_flows);
    merged.current_flow = result.flow;
    result.state = std::move(merged);
    return result;
}

double contraction_estimate(const CoefficientSet& coeffs, const Policy& policy,
                            const ParticleEnsemble& init, const MeasureFlow& nu1,
                            const MeasureFlow& nu2, std::uint64_t seed) {
    const double denom = path_coupled_distance(nu1, nu2);
    if (denom <= 0.0) {
        throw InvalidArgument("contraction_estimate: input flows coincide (zero denominator)");
    }
    const TimeWindow window = window_of_flow(nu1);
    const MeasureFlow out1 = apply_psi_window(coeffs, policy, init, nu1, window, seed);
    const MeasureFlow out2 = apply_psi_window(coeffs, policy, init, nu2, window, seed);
    return path_coupled_distance(out1, out2) / denom;
}

}  // namespace gmfc
