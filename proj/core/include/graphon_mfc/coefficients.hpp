#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphon_mfc/graphon.hpp"
#include "graphon_mfc/label_grid.hpp"
#include "graphon_mfc/measure.hpp"

namespace gmfc {

// Borrowed view of one atom cloud; null weights mean uniform.
struct CloudView {
    const double* xs = nullptr;
    const double* ws = nullptr;
    std::size_t n = 0;
};

// Read-only view of a measure collection with the per-label aggregates
// coefficient evaluations actually consume (means, second moments,
// normalized graphon neighborhood means). Built once per time step.
class MeasureView {
public:
    MeasureView() = default;
    MeasureView(const LabelGrid* grid, std::size_t dim, std::vector<CloudView> clouds,
                const Graphon* graphon = nullptr);

    static MeasureView of_collection(const MeasureCollection& mc,
                                     const Graphon* graphon = nullptr);

    const LabelGrid& grid() const { return *grid_; }
    std::size_t dim() const { return dim_; }
    std::size_t labels() const { return clouds_.size(); }
    const CloudView& cloud(std::size_t k) const { return clouds_[k]; }

    std::span<const double> mean(std::size_t k) const { return {means_.data() + k * dim_, dim_}; }
    double second_total(std::size_t k) const { return second_tot_[k]; }
    bool has_neighborhood() const { return !nbhd_means_.empty(); }
    std::span<const double> neighborhood_mean(std::size_t k) const;

    // integral_U W2(mu^u, delta_0)^2 lambda(du) = lambda-weighted second moments
    double collection_second_moment() const { return coll_second_; }

    // Full-fidelity copy for coefficients that want the raw collection.
    const MeasureCollection& materialize() const;

private:
    const LabelGrid* grid_ = nullptr;
    std::size_t dim_ = 0;
    std::vector<CloudView> clouds_;
    std::vector<double> means_;
    std::vector<double> second_tot_;
    std::vector<double> nbhd_means_;
    double coll_second_ = 0.0;
    std::shared_ptr<std::vector<std::vector<double>>> owned_weights_;
    mutable std::shared_ptr<MeasureCollection> materialized_;
    const MeasureCollection* source_ = nullptr;
};

// Arguments handed to coefficient callbacks: the current state-law view
// (mu) and, when the model consumes it, the action-law view (nu).
class EvalContext {
public:
    EvalContext(const MeasureView* states, const MeasureView* actions)
        : states_(states), actions_(actions) {}

    const MeasureView& states() const;
    const MeasureView& actions() const;
    bool has_actions() const { return actions_ != nullptr; }

    std::span<const double> state_mean(std::size_t k) const { return states().mean(k); }
    std::span<const double> neighborhood_mean(std::size_t k) const {
        return states().neighborhood_mean(k);
    }
    double state_second_total(std::size_t k) const { return states().second_total(k); }
    double states_squared_norm() const { return states().collection_second_moment(); }
    double actions_squared_norm() const { return actions().collection_second_moment(); }

private:
    const MeasureView* states_ = nullptr;
    const MeasureView* actions_ = nullptr;
};

// Box action space A in R^q with a designated origin element.
struct ActionBox {
    std::vector<double> lo, hi;
    std::vector<double> origin;

    static ActionBox symmetric(std::size_t q, double half_width);
    std::size_t dim() const { return lo.size(); }
    bool contains(std::span<const double> a, double slack = 1e-9) const;
    // points_per_dim grid values on each axis (uniform incl. endpoints)
    std::vector<std::vector<double>> axis_grids(std::size_t points_per_dim) const;
};

// Declared constants of the standing assumptions; the numeric probes in
// validate_coefficients test the model against these.
struct AssumptionConstants {
    double lipschitz = 0.0;                    // L
    double growth = 0.0;                       // M
    double holder = 0.0;                       // K
    std::array<double, 4> gamma{1.0, 1.0, 1.0, 1.0};
};

struct CoefficientSet {
    std::string family = "custom";
    LabelGrid grid;
    std::size_t state_dim = 1;
    std::size_t noise_dim = 1;
    std::size_t action_dim = 1;
    ActionBox action_space;
    std::shared_ptr<const Graphon> graphon;  // optional interaction kernel

    bool nu_independent = true;       // b, sigma, f free of the action law
    bool strengthened_growth = false; // |b|+|sigma| <= M(1+|x|+d(mu, delta_0))
    bool uses_neighborhood = false;   // coefficients read graphon aggregates
    AssumptionConstants constants;
    double lipschitz_in_action = 0.0; // 0 when b, sigma ignore the action value

    using DriftFn = std::function<void(std::size_t u, double t, std::span<const double> x,
                                       std::span<const double> a, const EvalContext&,
                                       std::span<double> out)>;
    using VolFn = DriftFn;  // out is state_dim x noise_dim, row-major
    using RunCostFn = std::function<double(std::size_t u, double t, std::span<const double> x,
                                           std::span<const double> a, const EvalContext&)>;
    using TermCostFn =
        std::function<double(std::size_t u, std::span<const double> x, const EvalContext&)>;

    DriftFn drift;
    VolFn volatility;
    RunCostFn running_cost;    // may be null => 0
    TermCostFn terminal_cost;  // may be null => 0
};

// Affine label profile c0 + c1 u + c2 u^2 used by the built-in families.
struct LabelPoly {
    std::vector<double> coeffs{0.0};
    double operator()(double u) const {
        double p = 1.0, v = 0.0;
        for (double c : coeffs) {
            v += c * p;
            p *= u;
        }
        return v;
    }
    double max_abs_on(const LabelGrid& grid) const {
        double m = 0.0;
        for (double u : grid.labels()) m = std::max(m, std::abs((*this)(u)));
        return m;
    }
};

// Largest constant c with |sum_v w_uv h_v| <= c d(h-collection); controls
// the measure-Lipschitz constant of graphon neighborhood means.
double graphon_mean_lipschitz(const Graphon& g, const LabelGrid& grid);

// dX = a dt + sigma0 dW, f = |a|^2/2 + c(u) (x - m_G(u, mu))^2 / 2, g = 0.
CoefficientSet make_graphon_lq(const LabelGrid& grid, std::shared_ptr<const Graphon> graphon,
                               LabelPoly state_cost, double sigma0, double action_half_width);

struct MeanReversionParams {
    double kappa = 0.25;   // drift pull toward the neighborhood mean
    double sigma0 = 0.2;   // constant volatility floor
    double sigma1 = 0.0;   // volatility loading on the neighborhood mean
    double cost_x2 = 0.0;  // f += cost_x2 * x^2 / 2
    double cost_g_x2 = 0.0;
};
CoefficientSet make_graphon_mean_reversion(const LabelGrid& grid,
                                           std::shared_ptr<const Graphon> graphon,
                                           const MeanReversionParams& params);

struct PolynomialParams {
    LabelPoly b0;            // drift intercept profile
    double b_x = 0.0;        // drift slope in x
    double b_a = 0.0;        // drift loading on the action
    double b_own_mean = 0.0; // drift loading on the own-label mean
    double b_nbhd = 0.0;     // drift loading on the neighborhood mean
    LabelPoly s0;            // volatility intercept profile
    double s_x = 0.0;
    double s_nbhd = 0.0;
    double f_a2 = 0.0;       // f = f_a2 a^2/2 + f_x2 x^2/2 + f_track (x-m_G)^2/2
    double f_x2 = 0.0;
    double f_track = 0.0;
    double g_x2 = 0.0;       // g = g_x2 x^2/2 + g_x x
    double g_x = 0.0;
    double action_half_width = 4.0;
};
CoefficientSet make_custom_polynomial(const LabelGrid& grid,
                                      std::shared_ptr<const Graphon> graphon,
                                      const PolynomialParams& params);

}  // namespace gmfc
