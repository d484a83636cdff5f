#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "graphon_mfc/bellman.hpp"
#include "graphon_mfc/coefficients.hpp"
#include "graphon_mfc/graphon.hpp"
#include "graphon_mfc/policy.hpp"

namespace gmfc {

// Linear-quadratic tracking instance on the label grid:
//   dX^u = a dt + sigma0 dW,  f = |a|^2/2 + c(u) (x - m_G(u, mu))^2 / 2,  g = 0.
// Splitting X into mean and fluctuation decouples the problem into a
// K-dimensional deterministic LQ regulator for the means (matrix
// Riccati) and one scalar LQ regulator per label for the fluctuations,
// which gives a closed-form optimal value and feedback up to two
// backward ODE integrations.
struct LQParams {
    LabelGrid grid;
    std::shared_ptr<const Graphon> graphon;
    LabelPoly state_cost{{1.0}};  // c(u) >= 0
    double sigma0 = 0.5;
    double horizon = 1.0;  // control on [0, horizon]
    double action_half_width = 6.0;
    std::size_t ode_nodes = 4001;  // backward RK4 grid (node count)
};

class LQBenchmark : public CandidateValue {
public:
    const LQParams& params() const { return params_; }
    const CoefficientSet& coefficients() const { return coeffs_; }

    std::size_t node_count() const { return nodes_; }
    double node_time(std::size_t i) const { return static_cast<double>(i) * node_dt_; }
    // trajectories on the node grid (flat K*K resp. K)
    std::span<const double> mean_riccati_node(std::size_t i) const;
    std::span<const double> fluct_riccati_node(std::size_t i) const;
    std::span<const double> offset_node(std::size_t i) const;

    // cubic Hermite interpolation between nodes
    void mean_riccati(double t, std::span<double> out) const;   // K*K
    void fluct_riccati(double t, std::span<double> out) const;  // K
    void offset(double t, std::span<double> out) const;         // K

    // Largest five-point-stencil defect of the stored ODE trajectories.
    double max_ode_residual() const { return max_ode_residual_; }

    // oracle value from per-label means and variances
    double value_from_moments(double t, std::span<const double> means,
                              std::span<const double> variances) const;

    std::unique_ptr<CandidateEvaluation> at(double t, const MeasureView& mu) const override;

    Policy oracle_feedback() const;
    // oracle feedback with every action shifted by a constant
    Policy perturbed_feedback(double shift) const;

    struct Shared;  // interpolation tables, internal

private:
    friend std::shared_ptr<LQBenchmark> build_lq_benchmark(const LQParams& params);

    LQParams params_;
    CoefficientSet coeffs_;
    std::shared_ptr<const Shared> shared_;
    std::size_t nodes_ = 0;
    double node_dt_ = 0.0;
    double max_ode_residual_ = 0.0;
};

std::shared_ptr<LQBenchmark> build_lq_benchmark(const LQParams& params);

}  // namespace gmfc
