#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "graphon_mfc/label_grid.hpp"
#include "graphon_mfc/measure.hpp"

namespace gmfc {

// j(u, z): pushes the uniform mark z in (0,1) to an initial state in
// R^d, label by label. The runtime realization of arbitrary initial
// laws via inverse-CDF sampling.
using QuantileMap = std::function<void(double label, double z, std::span<double> out)>;

// Finite-sample stand-in for the lifted state: per-label particle
// blocks plus the (stream id, uniform mark) bookkeeping that pins every
// noise draw to a counter-based stream.
class ParticleEnsemble {
public:
    ParticleEnsemble() = default;
    ParticleEnsemble(LabelGrid grid, std::size_t dim, std::size_t particles_per_label);

    const LabelGrid& grid() const { return grid_; }
    std::size_t dim() const { return dim_; }
    std::size_t particles_per_label() const { return n_; }

    std::span<double> states(std::size_t label) { return {states_[label].data(), n_ * dim_}; }
    std::span<const double> states(std::size_t label) const {
        return {states_[label].data(), n_ * dim_};
    }
    std::span<double> state(std::size_t label, std::size_t i) {
        return {states_[label].data() + i * dim_, dim_};
    }
    std::span<const double> state(std::size_t label, std::size_t i) const {
        return {states_[label].data() + i * dim_, dim_};
    }

    std::uint64_t stream_id(std::size_t label, std::size_t i) const {
        return streams_[label][i];
    }
    double uniform_mark(std::size_t label, std::size_t i) const { return zs_[label][i]; }

    void set_stream_id(std::size_t label, std::size_t i, std::uint64_t sid) {
        streams_[label][i] = sid;
    }
    void set_uniform_mark(std::size_t label, std::size_t i, double z) { zs_[label][i] = z; }

    MeasureCollection collection() const;

private:
    LabelGrid grid_;
    std::size_t dim_ = 0;
    std::size_t n_ = 0;
    std::vector<std::vector<double>> states_;
    std::vector<std::vector<std::uint64_t>> streams_;
    std::vector<std::vector<double>> zs_;
};

// Draws per-label i.i.d. initial states X = j(u, Z) with Z from the
// label/particle counter streams; deterministic given seed.
ParticleEnsemble make_ensemble(const QuantileMap& quantile_map, const LabelGrid& grid,
                               std::size_t dim, std::size_t particles_per_label,
                               std::uint64_t seed);

// Convenience sampler returning the empirical collection directly.
MeasureCollection sample_initial(const QuantileMap& quantile_map, const LabelGrid& grid,
                                 std::size_t dim, std::size_t particles_per_label,
                                 std::uint64_t seed);

namespace quantile_maps {
QuantileMap constant(std::vector<double> point);
// Per coordinate: mean(u) + sd(u) * Phi^{-1}(z), coefficients affine in u.
QuantileMap gaussian(double mean0, double mean_slope, double sd0, double sd_slope,
                     std::size_t dim);
QuantileMap uniform(double lo, double hi, std::size_t dim);
QuantileMap label_value(std::size_t dim);  // j(u, z) = (u, ..., u)
}  // namespace quantile_maps

}  // namespace gmfc
