#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "graphon_mfc/label_grid.hpp"

namespace gmfc {

// Weighted atom cloud on R^d. Weights are normalized to sum to one;
// an empty weight vector means uniform 1/N.
class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;
    EmpiricalMeasure(std::size_t dim, std::vector<double> atoms,
                     std::vector<double> weights = {});

    static EmpiricalMeasure dirac(std::span<const double> point);
    static EmpiricalMeasure dirac1d(double x) {
        const double p[1] = {x};
        return dirac(std::span<const double>(p, 1));
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return dim_ == 0 ? 0 : atoms_.size() / dim_; }
    std::span<const double> atom(std::size_t i) const {
        return {atoms_.data() + i * dim_, dim_};
    }
    double weight(std::size_t i) const {
        return weights_.empty() ? 1.0 / static_cast<double>(size()) : weights_[i];
    }
    bool uniform_weights() const { return weights_.empty(); }
    const std::vector<double>& atoms_flat() const { return atoms_; }

    std::vector<double> mean() const;
    // Raw second moments: per-coordinate E[x_i^2] plus total E[|x|^2].
    std::vector<double> second_moment() const;
    double second_moment_total() const;

private:
    std::size_t dim_ = 0;
    std::vector<double> atoms_;    // size() * dim_, atom-major
    std::vector<double> weights_;  // empty => uniform
};

// Element of the lifted state space on the grid: one empirical measure
// per label, square norm integral_U W2(mu^u, delta_0)^2 lambda(du).
class MeasureCollection {
public:
    MeasureCollection() = default;
    MeasureCollection(LabelGrid grid, std::vector<EmpiricalMeasure> per_label);

    const LabelGrid& grid() const { return grid_; }
    std::size_t dim() const { return per_label_.empty() ? 0 : per_label_[0].dim(); }
    std::size_t size() const { return per_label_.size(); }
    const EmpiricalMeasure& measure(std::size_t k) const { return per_label_[k]; }
    const std::vector<EmpiricalMeasure>& measures() const { return per_label_; }

    // Per-label first moments / raw second moments and their
    // lambda-averages (normalized by total mass).
    struct Moments {
        std::vector<std::vector<double>> mean;           // [label][coord]
        std::vector<std::vector<double>> second;         // [label][coord]
        std::vector<double> second_total;                // [label] E|x|^2
        std::vector<double> aggregate_mean;              // [coord]
        std::vector<double> aggregate_second;            // [coord]
        double aggregate_second_total = 0.0;
    };
    Moments moments() const;

    double squared_norm() const;  // integral of W2(mu^u, delta_0)^2

private:
    LabelGrid grid_;
    std::vector<EmpiricalMeasure> per_label_;
};

// Time-indexed flow of collections. When built from a particle
// simulation the flow is path-coupled: trajectories_[k] stores, for
// label k, step-major particle states (M+1 blocks of N*dim doubles)
// and snapshot j is exactly the time-t_j marginal of those paths.
class MeasureFlow {
public:
    MeasureFlow() = default;

    static MeasureFlow from_snapshots(std::vector<double> time_grid,
                                      std::vector<MeasureCollection> snapshots);
    static MeasureFlow path_coupled(std::vector<double> time_grid, LabelGrid grid,
                                    std::size_t dim, std::size_t particles_per_label,
                                    std::vector<std::vector<double>> trajectories);

    const std::vector<double>& time_grid() const { return time_grid_; }
    std::size_t steps() const { return time_grid_.empty() ? 0 : time_grid_.size() - 1; }
    const LabelGrid& grid() const { return grid_; }
    std::size_t dim() const { return dim_; }
    bool is_path_coupled() const { return !trajectories_.empty(); }
    std::size_t particles_per_label() const { return particles_; }

    // Contiguous view of label k's particle states at time index j.
    std::span<const double> state_block(std::size_t k, std::size_t j) const;
    MeasureCollection collection_at(std::size_t j) const;

    // Per-particle path maximum of |X_j - Y_j|^2 across the grid,
    // averaged within labels and lambda-integrated: the synchronous
    // coupling upper bound for the path-space collection metric.
    friend double path_coupled_distance(const MeasureFlow& a, const MeasureFlow& b);

private:
    std::vector<double> time_grid_;
    LabelGrid grid_;
    std::size_t dim_ = 0;
    std::size_t particles_ = 0;
    std::vector<std::vector<double>> trajectories_;   // [label][(M+1)*N*dim]
    std::vector<MeasureCollection> snapshots_;        // used when not path-coupled
};

double path_coupled_distance(const MeasureFlow& a, const MeasureFlow& b);

// Maximum over grid times of the true collection distance between
// snapshot marginals; usable when the flows do not share particles.
double snapshot_sup_distance(const MeasureFlow& a, const MeasureFlow& b);

}  // namespace gmfc
