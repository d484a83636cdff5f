#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "graphon_mfc/coefficients.hpp"
#include "graphon_mfc/ensemble.hpp"
#include "graphon_mfc/measure.hpp"
#include "graphon_mfc/policy.hpp"
#include "graphon_mfc/simulate.hpp"
#include "graphon_mfc/test_function.hpp"

namespace gmfc {

// Smooth candidate for the dynamic programming equation, evaluated
// through per-(t, mu) bindings so derivative lookups stay cheap inside
// atom/action loops.
class CandidateEvaluation {
public:
    virtual ~CandidateEvaluation() = default;
    virtual double value() const = 0;
    virtual double partial_t() const = 0;
    virtual double flat(std::size_t u, std::span<const double> x) const = 0;
    virtual void grad(std::size_t u, std::span<const double> x, std::span<double> out) const = 0;
    virtual void hess(std::size_t u, std::span<const double> x, std::span<double> out) const = 0;
};

class CandidateValue {
public:
    virtual ~CandidateValue() = default;
    virtual std::unique_ptr<CandidateEvaluation> at(double t, const MeasureView& mu) const = 0;
    double value(double t, const MeasureCollection& mu, const Graphon* graphon = nullptr) const;
};

// Wraps a TestFunction as a candidate.
class TestFunctionCandidate : public CandidateValue {
public:
    explicit TestFunctionCandidate(TestFunction tf) : tf_(std::move(tf)) {}
    std::unique_ptr<CandidateEvaluation> at(double t, const MeasureView& mu) const override;
    const TestFunction& function() const { return tf_; }

private:
    TestFunction tf_;
};

// Per-label empirical measure on R^d x A whose first marginal is, by
// construction, an existing MeasureCollection: actions are attached to
// its atoms (mixtures of such couplings keep the marginal).
class LiftedCoupling {
public:
    // actions[label] has one action (q doubles) per atom of mu's label cloud
    static LiftedCoupling attach(std::shared_ptr<const MeasureCollection> mu,
                                 std::vector<std::vector<double>> actions,
                                 std::size_t action_dim);
    static LiftedCoupling constant_action(std::shared_ptr<const MeasureCollection> mu,
                                          std::vector<double> action);
    static LiftedCoupling mix(const LiftedCoupling& a, const LiftedCoupling& b, double theta);

    const MeasureCollection& first_marginal() const { return *marginal_target_; }
    std::shared_ptr<const MeasureCollection> marginal_ptr() const { return marginal_target_; }
    std::size_t dim() const { return dim_; }
    std::size_t action_dim() const { return action_dim_; }

    struct LabelAtoms {
        const double* xs;
        const double* as;
        const double* ws;
        std::size_t n;
    };
    LabelAtoms atoms(std::size_t k) const {
        return {xs_[k].data(), as_[k].data(), ws_[k].data(), ws_[k].size()};
    }
    MeasureCollection action_collection() const;  // second marginal pi_2

private:
    std::shared_ptr<const MeasureCollection> marginal_target_;
    std::size_t dim_ = 1;
    std::size_t action_dim_ = 1;
    std::vector<std::vector<double>> xs_, as_, ws_;
};

// Label-wise Hamiltonian: integral over pi^u of
//   grad_x(flat phi) . b + (1/2) hess_x(flat phi) : sigma sigma' + f
// with the measure arguments (pi_1, pi_2).
double hamiltonian(const CoefficientSet& coeffs, std::size_t u_index, double t,
                   const LiftedCoupling& pi, const CandidateValue& phi);

struct FeedbackSearch {
    std::size_t actions_per_dim = 41;
    // cap on assignment tuples enumerated for nu-dependent models
    std::size_t joint_budget = 200000;
};

struct BellmanReport {
    double residual = 0.0;        // -d_t phi - min integrated Hamiltonian
    double minimized_value = 0.0; // the integrated Hamiltonian at the grid minimum
    double partial_t = 0.0;
    double grid_resolution = 0.0; // max action grid spacing
};

BellmanReport bellman_report(const CoefficientSet& coeffs, const CandidateValue& phi, double t,
                             const MeasureCollection& mu, const FeedbackSearch& search = {});
double bellman_residual(const CoefficientSet& coeffs, const CandidateValue& phi, double t,
                        const MeasureCollection& mu, const FeedbackSearch& search = {});

// phi(T, mu) - integral_U integral g dmu^u lambda(du)
double terminal_residual(const CoefficientSet& coeffs, const CandidateValue& phi, double T,
                         const MeasureCollection& mu);

struct DppReport {
    double lhs = 0.0;  // best full-horizon piecewise control
    double rhs = 0.0;  // best nested two-stage control (flow restart at theta)
    double gap = 0.0;
    double lhs_se = 0.0;
    double rhs_se = 0.0;
    double pooled_se = 0.0;
    std::size_t branches = 0;
};

// Exhaustive two-stage dynamic programming comparison over a finite
// control grid with common random numbers across every branch.
DppReport dpp_check(const CoefficientSet& coeffs, const std::vector<Policy>& control_grid,
                    const ParticleEnsemble& init, double t, double theta, double T,
                    std::size_t steps, std::uint64_t seed);

struct VerificationReport {
    double phi_at_init = 0.0;
    CostEstimate simulated_cost;
    std::vector<double> sampled_times;
    std::vector<double> bellman_residuals;
    double max_abs_bellman_residual = 0.0;
    double terminal_residual = 0.0;
};

VerificationReport verify_policy(const CoefficientSet& coeffs, const CandidateValue& phi,
                                 const Policy& feedback, const ParticleEnsemble& init, double t0,
                                 double T, std::size_t steps, std::uint64_t seed,
                                 std::size_t residual_samples = 5,
                                 const FeedbackSearch& search = {});

}  // namespace gmfc
