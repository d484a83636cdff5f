#pragma once

#include <cstdint>
#include <vector>

#include "graphon_mfc/coefficients.hpp"
#include "graphon_mfc/measure.hpp"
#include "graphon_mfc/policy.hpp"
#include "graphon_mfc/simulate.hpp"
#include "graphon_mfc/test_function.hpp"

namespace gmfc {

double evaluate(const TestFunction& tf, double t, const MeasureCollection& mu);
double flat_derivative(const TestFunction& tf, double t, const MeasureCollection& mu,
                       std::size_t u_index, std::span<const double> x);
std::vector<double> grad_x_flat(const TestFunction& tf, double t, const MeasureCollection& mu,
                                std::size_t u_index, std::span<const double> x);
std::vector<double> hess_x_flat(const TestFunction& tf, double t, const MeasureCollection& mu,
                                std::size_t u_index, std::span<const double> x);

// Duality pairing <phi, rho> for the signed measure rho = nu - mu:
// integral_U integral phi(u, x) (nu^u - mu^u)(dx) lambda(du) with
// phi = flat derivative of tf at mu.
double flat_pairing(const TestFunction& tf, double t, const MeasureCollection& mu,
                    const MeasureCollection& nu);

struct GateauxReport {
    std::vector<double> epsilons;
    std::vector<double> finite_differences;  // [v(mu + eps(nu-mu)) - v(mu)] / eps
    double pairing = 0.0;
    std::vector<double> errors;  // |fd - pairing|
    double fitted_slope = 0.0;   // log-log LSQ of errors vs eps (0 when errors vanish)
    bool exact = false;          // all errors below roundoff
};

GateauxReport gateaux_check(const TestFunction& tf, double t, const MeasureCollection& mu,
                            const MeasureCollection& nu, std::vector<double> epsilons);

enum class TimeQuadrature { kMidpoint, kLeftEndpoint };

struct ItoReport {
    double lhs = 0.0;       // v(t_M, mu_M) - v(t_0, mu_0)
    double rhs = 0.0;       // time quadrature of the chain-rule integrand
    double residual = 0.0;  // lhs - rhs
};

// Chain-rule residual along a stored path-coupled simulation.
ItoReport ito_residual(const TestFunction& tf, const SimulationResult& result,
                       const CoefficientSet& coeffs, const Policy& policy,
                       TimeQuadrature quad = TimeQuadrature::kMidpoint);

// Same computation streamed through a fresh simulation; handles particle
// counts whose full path storage would not fit in memory.
ItoReport ito_residual_streaming(const TestFunction& tf, const CoefficientSet& coeffs,
                                 const Policy& policy, const ParticleEnsemble& init,
                                 const TimeWindow& window, std::uint64_t seed,
                                 TimeQuadrature quad = TimeQuadrature::kMidpoint);

}  // namespace gmfc
