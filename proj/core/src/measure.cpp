#include "graphon_mfc/measure.hpp"

#include <algorithm>
#include <cmath>

#include "graphon_mfc/numeric.hpp"
#include "graphon_mfc/wasserstein.hpp"

namespace gmfc {

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> atoms,
                                   std::vector<double> weights)
    : dim_(dim), atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (dim_ == 0) throw InvalidArgument("EmpiricalMeasure: dim must be >= 1");
    if (atoms_.empty() || atoms_.size() % dim_ != 0) {
        throw InvalidArgument("EmpiricalMeasure: atom buffer size must be a positive multiple of dim");
    }
    for (double x : atoms_) {
        if (!std::isfinite(x)) throw InvalidArgument("EmpiricalMeasure: non-finite atom coordinate");
    }
    if (!weights_.empty()) {
        if (weights_.size() != atoms_.size() / dim_) {
            throw InvalidArgument("EmpiricalMeasure: weight count must match atom count");
        }
        KahanSum total;
        for (double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                throw InvalidArgument("EmpiricalMeasure: weights must be nonnegative");
            }
            total.add(w);
        }
        const double mass = total.value();
        if (std::abs(mass - 1.0) > 1e-12) {
            if (mass <= 0.0) throw InvalidArgument("EmpiricalMeasure: zero total weight");
            for (double& w : weights_) w /= mass;
        }
    }
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> point) {
    return EmpiricalMeasure(point.size(), std::vector<double>(point.begin(), point.end()));
}

std::vector<double> EmpiricalMeasure::mean() const {
    std::vector<KahanSum> acc(dim_);
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weight(i);
        const auto x = atom(i);
        for (std::size_t c = 0; c < dim_; ++c) acc[c].add(w * x[c]);
    }
    std::vector<double> out(dim_);
    for (std::size_t c = 0; c < dim_; ++c) out[c] = acc[c].value();
    return out;
}

std::vector<double> EmpiricalMeasure::second_moment() const {
    std::vector<KahanSum> acc(dim_);
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weight(i);
        const auto x = atom(i);
        for (std::size_t c = 0; c < dim_; ++c) acc[c].add(w * x[c] * x[c]);
    }
    std::vector<double> out(dim_);
    for (std::size_t c = 0; c < dim_; ++c) out[c] = acc[c].value();
    return out;
}

double EmpiricalMeasure::second_moment_total() const {
    KahanSum acc;
    for (double m : second_moment()) acc.add(m);
    return acc.value();
}

MeasureCollection::MeasureCollection(LabelGrid grid, std::vector<EmpiricalMeasure> per_label)
    : grid_(std::move(grid)), per_label_(std::move(per_label)) {
    if (per_label_.size() != grid_.size()) {
        throw InvalidArgument("MeasureCollection: one measure per grid label required");
    }
    for (const auto& m : per_label_) {
        if (m.dim() != per_label_[0].dim()) {
            throw InvalidArgument("MeasureCollection: mixed dimensions across labels");
        }
    }
}

MeasureCollection::Moments MeasureCollection::moments() const {
    Moments out;
    const std::size_t k_count = size();
    const std::size_t d = dim();
    out.mean.resize(k_count);
    out.second.resize(k_count);
    out.second_total.resize(k_count);
    std::vector<KahanSum> agg_mean(d), agg_second(d);
    KahanSum agg_tot;
    for (std::size_t k = 0; k < k_count; ++k) {
        out.mean[k] = per_label_[k].mean();
        out.second[k] = per_label_[k].second_moment();
        out.second_total[k] = stable_sum(out.second[k]);
        const double w = grid_.weight(k);
        for (std::size_t c = 0; c < d; ++c) {
            agg_mean[c].add(w * out.mean[k][c]);
            agg_second[c].add(w * out.second[k][c]);
        }
        agg_tot.add(w * out.second_total[k]);
    }
    out.aggregate_mean.resize(d);
    out.aggregate_second.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        out.aggregate_mean[c] = agg_mean[c].value() / grid_.total_mass();
        out.aggregate_second[c] = agg_second[c].value() / grid_.total_mass();
    }
    out.aggregate_second_total = agg_tot.value() / grid_.total_mass();
    return out;
}

double MeasureCollection::squared_norm() const {
    KahanSum acc;
    for (std::size_t k = 0; k < size(); ++k) {
        acc.add(grid_.weight(k) * per_label_[k].second_moment_total());
    }
    return acc.value();
}

MeasureFlow MeasureFlow::from_snapshots(std::vector<double> time_grid,
                                        std::vector<MeasureCollection> snapshots) {
    if (snapshots.empty() || snapshots.size() != time_grid.size()) {
        throw InvalidArgument("MeasureFlow: one snapshot per time point required");
    }
    for (std::size_t j = 1; j < time_grid.size(); ++j) {
        if (!(time_grid[j] > time_grid[j - 1])) {
            throw InvalidArgument("MeasureFlow: time grid must be strictly increasing");
        }
        if (!(snapshots[j].grid() == snapshots[0].grid())) {
            throw InvalidArgument("MeasureFlow: snapshots must share one LabelGrid");
        }
    }
    MeasureFlow flow;
    flow.time_grid_ = std::move(time_grid);
    flow.grid_ = snapshots[0].grid();
    flow.dim_ = snapshots[0].dim();
    flow.snapshots_ = std::move(snapshots);
    return flow;
}

MeasureFlow MeasureFlow::path_coupled(std::vector<double> time_grid, LabelGrid grid,
                                      std::size_t dim, std::size_t particles_per_label,
                                      std::vector<std::vector<double>> trajectories) {
    if (time_grid.empty()) throw InvalidArgument("MeasureFlow: empty time grid");
    for (std::size_t j = 1; j < time_grid.size(); ++j) {
        if (!(time_grid[j] > time_grid[j - 1])) {
            throw InvalidArgument("MeasureFlow: time grid must be strictly increasing");
        }
    }
    if (trajectories.size() != grid.size()) {
        throw InvalidArgument("MeasureFlow: one trajectory block per label required");
    }
    const std::size_t expected = time_grid.size() * particles_per_label * dim;
    for (const auto& block : trajectories) {
        if (block.size() != expected) {
            throw InvalidArgument("MeasureFlow: trajectory block size mismatch");
        }
    }
    MeasureFlow flow;
    flow.time_grid_ = std::move(time_grid);
    flow.grid_ = std::move(grid);
    flow.dim_ = dim;
    flow.particles_ = particles_per_label;
    flow.trajectories_ = std::move(trajectories);
    return flow;
}

std::span<const double> MeasureFlow::state_block(std::size_t k, std::size_t j) const {
    if (!is_path_coupled()) throw InvalidArgument("MeasureFlow: no stored trajectories");
    const std::size_t block = particles_ * dim_;
    return {trajectories_[k].data() + j * block, block};
}

MeasureCollection MeasureFlow::collection_at(std::size_t j) const {
    if (!is_path_coupled()) {
        return snapshots_.at(j);
    }
    std::vector<EmpiricalMeasure> per_label;
    per_label.reserve(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) {
        const auto block = state_block(k, j);
        per_label.emplace_back(dim_, std::vector<double>(block.begin(), block.end()));
    }
    return MeasureCollection(grid_, std::move(per_label));
}

double path_coupled_distance(const MeasureFlow& a, const MeasureFlow& b) {
    if (!a.is_path_coupled() || !b.is_path_coupled()) {
        throw InvalidArgument("path_coupled_distance: both flows must store trajectories");
    }
    if (!(a.grid_ == b.grid_) || a.dim_ != b.dim_ || a.particles_ != b.particles_ ||
        a.time_grid_ != b.time_grid_) {
        throw InvalidArgument("path_coupled_distance: flows must share grid, dim, particles, times");
    }
    const std::size_t steps = a.time_grid_.size();
    const std::size_t n = a.particles_;
    const std::size_t d = a.dim_;
    KahanSum acc;
    for (std::size_t k = 0; k < a.grid_.size(); ++k) {
        KahanSum label_acc;
        for (std::size_t i = 0; i < n; ++i) {
            double worst = 0.0;
            for (std::size_t j = 0; j < steps; ++j) {
                const double* xa = a.trajectories_[k].data() + (j * n + i) * d;
                const double* xb = b.trajectories_[k].data() + (j * n + i) * d;
                double dist2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) dist2 += sq(xa[c] - xb[c]);
                worst = std::max(worst, dist2);
            }
            label_acc.add(worst);
        }
        acc.add(a.grid_.weight(k) * label_acc.value() / static_cast<double>(n));
    }
    return std::sqrt(acc.value());
}

double snapshot_sup_distance(const MeasureFlow& a, const MeasureFlow& b) {
    if (a.time_grid() != b.time_grid()) {
        throw InvalidArgument("snapshot_sup_distance: time grids differ");
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < a.time_grid().size(); ++j) {
        worst = std::max(worst, collection_distance(a.collection_at(j), b.collection_at(j)));
    }
    return worst;
}

}  // namespace gmfc
