#pragma once

#include <cstdint>
#include <vector>

#include "graphon_mfc/coefficients.hpp"
#include "graphon_mfc/ensemble.hpp"
#include "graphon_mfc/measure.hpp"
#include "graphon_mfc/policy.hpp"
#include "graphon_mfc/simulate.hpp"

namespace gmfc {

struct PicardState {
    std::size_t iterate_index = 0;
    MeasureFlow current_flow;
    std::vector<double> distance_history;    // d(nu^{k+1}, nu^k), path-coupled
    std::vector<double> contraction_ratios;  // successive history ratios
    bool converged = false;
    // First iterate index of each time-splitting segment (empty when
    // the horizon was solved in one piece).
    std::vector<std::size_t> segment_starts;
};

// One application of the decoupling map: simulate with the state-law
// argument frozen to nu. The same seed reuses the same noise counters,
// so successive calls are synchronously coupled.
MeasureFlow apply_psi(const CoefficientSet& coeffs, const Policy& policy,
                      const ParticleEnsemble& init, const MeasureFlow& nu, std::uint64_t seed);

struct PicardOptions {
    std::size_t max_iters = 50;
    double tol = 1e-3;
    // Split horizons longer than the contraction estimate allows and
    // chain segments through the flow property.
    bool auto_split = false;
    std::size_t max_segments = 64;
};

struct PicardResult {
    MeasureFlow flow;
    PicardState state;
};

PicardResult picard_solve(const CoefficientSet& coeffs, const Policy& policy,
                          const ParticleEnsemble& init, double t0, double T, std::size_t steps,
                          std::uint64_t seed, const PicardOptions& opts = {});

// d(Psi(nu1), Psi(nu2)) / d(nu1, nu2) under synchronous coupling.
double contraction_estimate(const CoefficientSet& coeffs, const Policy& policy,
                            const ParticleEnsemble& init, const MeasureFlow& nu1,
                            const MeasureFlow& nu2, std::uint64_t seed);

// Time-constant extension of the initial empirical law, path-coupled;
// the Picard start nu^(0).
MeasureFlow constant_law_flow(const ParticleEnsemble& init, const TimeWindow& window);

}  // namespace gmfc
