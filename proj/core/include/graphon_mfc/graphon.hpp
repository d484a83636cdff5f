#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "graphon_mfc/label_grid.hpp"
#include "graphon_mfc/measure.hpp"

namespace gmfc {

// Interaction kernel G on the label grid, stored densely together with
// the row degrees |G(u,.)|_1 computed against the grid weights.
class Graphon {
public:
    Graphon() = default;

    static Graphon constant(const LabelGrid& grid, double value = 1.0);
    static Graphon product(const LabelGrid& grid);        // G(u,v) = u*v
    static Graphon identity(const LabelGrid& grid);       // G(u,v) = 1{v == u}
    static Graphon from_kernel(const LabelGrid& grid,
                               const std::function<double(double, double)>& kernel);
    static Graphon from_matrix(const LabelGrid& grid, std::vector<double> dense);

    std::size_t size() const { return degree_.size(); }
    double kernel(std::size_t u, std::size_t v) const { return dense_[u * size() + v]; }
    double row_degree(std::size_t u) const { return degree_[u]; }

    // Normalized mixture weights G(u,v) lambda_v / |G(u,.)|_1.
    // Throws unless the row degree is positive.
    std::vector<double> mixture_weights(std::size_t u) const;

    bool zero_row(std::size_t u) const { return degree_[u] <= 0.0; }

private:
    Graphon(const LabelGrid& grid, std::vector<double> dense);
    std::vector<double> dense_;
    std::vector<double> degree_;
    std::vector<double> grid_weights_;
};

enum class ZeroDegreePolicy {
    kError,        // default: refuse to normalize an empty neighborhood
    kDiracOrigin,  // caller opted in: substitute delta_0
};

// Normalized neighborhood measure integral G(u,v)/|G(u,.)|_1 mu^v lambda(dv),
// returned as the weighted mixture of the per-label clouds.
EmpiricalMeasure graphon_neighborhood(const Graphon& g, const MeasureCollection& mu,
                                      std::size_t u_index,
                                      ZeroDegreePolicy policy = ZeroDegreePolicy::kError);

}  // namespace gmfc
