#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "graphon_mfc/coefficients.hpp"
#include "graphon_mfc/ensemble.hpp"
#include "graphon_mfc/measure.hpp"
#include "graphon_mfc/policy.hpp"

namespace gmfc {

// Uniform step grid t_j = base + (offset + j) dt, j = 0..steps. Chained
// segments share `base` and advance `offset`, so restarted simulations
// reproduce both the times and the noise counters of a single long run
// bit for bit (the discrete flow property).
struct TimeWindow {
    double base = 0.0;
    double dt = 0.0;
    std::size_t offset = 0;
    std::size_t steps = 0;
    // Gaussian increments per step are aggregated from this many finer
    // counter draws, which gives common random numbers across dt
    // refinements (halving dt doubles substeps on the same counters).
    std::size_t noise_substeps = 1;

    static TimeWindow span(double t0, double t1, std::size_t steps);
    double time_at(std::size_t j) const {
        return base + static_cast<double>(offset + j) * dt;
    }
    double start() const { return time_at(0); }
    double end() const { return time_at(steps); }
    TimeWindow continuation(std::size_t more_steps) const;
};

// Hook observing each integrand point (states, actions, drift and
// volatility values at step j) before the Euler update; this is how the
// chain-rule verifier streams large runs without storing paths.
struct StepData {
    std::size_t local_step = 0;
    double t = 0.0;
    const EvalContext* ctx = nullptr;
    std::size_t labels = 0, particles = 0, dim = 0, noise_dim = 0, action_dim = 0;
    std::function<std::span<const double>(std::size_t)> states;   // N*d per label
    std::function<std::span<const double>(std::size_t)> drifts;   // N*d
    std::function<std::span<const double>(std::size_t)> vols;     // N*d*ell
    std::function<std::span<const double>(std::size_t)> actions;  // N*q
};
using StepObserver = std::function<void(const StepData&)>;

struct SimOptions {
    bool store_paths = true;
    bool store_action_flow = false;
    bool include_terminal_cost = true;
    // Running cost accumulates into the pre bucket strictly before this
    // local step and into post from it on.
    std::size_t cost_checkpoint = std::numeric_limits<std::size_t>::max();
    double blowup_guard = 1e9;
    StepObserver observer;
};

struct SimDiagnostics {
    double max_abs_state = 0.0;
    std::size_t steps = 0;
    double action_square_integral = 0.0;  // MC estimate of the admissibility integral
};

struct SimulationResult {
    MeasureFlow flow;
    ParticleEnsemble final_ensemble;
    ParticleEnsemble initial_ensemble;
    std::vector<std::vector<double>> run_cost_pre;   // [label][particle]
    std::vector<std::vector<double>> run_cost_post;  // [label][particle]
    std::vector<std::vector<double>> terminal_cost;  // [label][particle]
    std::optional<std::vector<MeasureCollection>> action_flow;
    SimDiagnostics diagnostics;
    TimeWindow window;
    std::uint64_t seed = 0;
};

struct CostEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// Euler-Maruyama over the particle ensemble with interaction through
// the current empirical collections; deterministic given seed.
SimulationResult simulate(const CoefficientSet& coeffs, const Policy& policy,
                          const ParticleEnsemble& init, const TimeWindow& window,
                          std::uint64_t seed, const SimOptions& opts = {});

inline SimulationResult simulate(const CoefficientSet& coeffs, const Policy& policy,
                                 const ParticleEnsemble& init, double t0, double T,
                                 std::size_t steps, std::uint64_t seed,
                                 const SimOptions& opts = {}) {
    return simulate(coeffs, policy, init, TimeWindow::span(t0, T, steps), seed, opts);
}

// Left-endpoint quadrature of the running cost plus terminal cost,
// Monte Carlo averaged per label and lambda-integrated.
CostEstimate cost(const CoefficientSet& coeffs, const SimulationResult& result);

namespace detail {
// Per-step driver shared by simulate and the frozen-flow map: when
// frozen_states is non-null the state-law argument of the coefficients
// is read from that flow instead of the evolving ensemble.
SimulationResult simulate_impl(const CoefficientSet& coeffs, const Policy& policy,
                               const ParticleEnsemble& init, const TimeWindow& window,
                               std::uint64_t seed, const SimOptions& opts,
                               const MeasureFlow* frozen_states);
}  // namespace detail

}  // namespace gmfc
