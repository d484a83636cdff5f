#pragma once

#include <cstddef>
#include <string>

#include "graphon_mfc/measure.hpp"

namespace gmfc {

struct TransportOptions {
    // Exact LP transport for atom counts up to this cap (per side);
    // larger multi-dimensional problems fall back to entropic
    // regularization with eps = entropic_eps_factor * scale^2.
    std::size_t exact_cap = 64;
    double entropic_eps_factor = 1e-3;
    std::size_t sinkhorn_max_iters = 4000;
    double sinkhorn_marginal_tol = 1e-8;
};

struct TransportInfo {
    std::string backend;          // "quantile", "simplex", "sinkhorn"
    double declared_tolerance = 0.0;
    std::size_t iterations = 0;   // sinkhorn only
};

// 2-Wasserstein distance between empirical measures. Dimension one is
// exact via quantile-function integration; d >= 2 uses the
// transportation simplex up to exact_cap atoms and entropic transport
// beyond it.
double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                    const TransportOptions& opts = {}, TransportInfo* info = nullptr);

// Collection metric d(mu, nu) = (integral_U W2(mu^u, nu^u)^2 lambda(du))^(1/2).
double collection_distance(const MeasureCollection& mu, const MeasureCollection& nu,
                           const TransportOptions& opts = {});

namespace detail {
// Exact squared transport cost between weighted point clouds, solved
// with the transportation simplex. Exposed for tests.
double transport_simplex_cost(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
double sinkhorn_cost(const EmpiricalMeasure& a, const EmpiricalMeasure& b, double eps,
                     std::size_t max_iters, double marginal_tol, std::size_t* iters_out);
}  // namespace detail

}  // namespace gmfc
