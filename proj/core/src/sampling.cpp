#include <cmath>

#include "graphon_mfc/ensemble.hpp"
#include "graphon_mfc/numeric.hpp"
#include "graphon_mfc/rng.hpp"

namespace gmfc {
namespace rng {

// Wichura's algorithm AS 241, PPND16.
double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw InvalidArgument("normal_quantile: p must lie in (0,1)");
    }
    const double q = p - 0.5;
    double r;
    if (std::abs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                  3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

}  // namespace rng

ParticleEnsemble::ParticleEnsemble(LabelGrid grid, std::size_t dim,
                                   std::size_t particles_per_label)
    : grid_(std::move(grid)), dim_(dim), n_(particles_per_label) {
    if (dim_ == 0 || n_ == 0) {
        throw InvalidArgument("ParticleEnsemble: dim and particle count must be >= 1");
    }
    const std::size_t k_count = grid_.size();
    states_.assign(k_count, std::vector<double>(n_ * dim_, 0.0));
    streams_.assign(k_count, std::vector<std::uint64_t>(n_));
    zs_.assign(k_count, std::vector<double>(n_, 0.5));
    for (auto& s : streams_) {
        for (std::size_t i = 0; i < n_; ++i) s[i] = i;
    }
}

MeasureCollection ParticleEnsemble::collection() const {
    std::vector<EmpiricalMeasure> per_label;
    per_label.reserve(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) {
        per_label.emplace_back(dim_, states_[k]);
    }
    return MeasureCollection(grid_, std::move(per_label));
}

ParticleEnsemble make_ensemble(const QuantileMap& quantile_map, const LabelGrid& grid,
                               std::size_t dim, std::size_t particles_per_label,
                               std::uint64_t seed) {
    ParticleEnsemble ens(grid, dim, particles_per_label);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        for (std::size_t i = 0; i < particles_per_label; ++i) {
            const double z = rng::uniform_open(seed, rng::kInitDomain, k, i, 0, 0);
            ens.set_uniform_mark(k, i, z);
            quantile_map(grid.label(k), z, ens.state(k, i));
            for (double c : ens.state(k, i)) {
                if (!std::isfinite(c)) {
                    throw NumericalFailure("make_ensemble: quantile map produced non-finite state");
                }
            }
        }
    }
    return ens;
}

MeasureCollection sample_initial(const QuantileMap& quantile_map, const LabelGrid& grid,
                                 std::size_t dim, std::size_t particles_per_label,
                                 std::uint64_t seed) {
    return make_ensemble(quantile_map, grid, dim, particles_per_label, seed).collection();
}

namespace quantile_maps {

QuantileMap constant(std::vector<double> point) {
    return [point = std::move(point)](double, double, std::span<double> out) {
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = point[c % point.size()];
    };
}

QuantileMap gaussian(double mean0, double mean_slope, double sd0, double sd_slope,
                     std::size_t dim) {
    return [=](double u, double z, std::span<double> out) {
        const double mean = mean0 + mean_slope * u;
        const double sd = sd0 + sd_slope * u;
        const double g = rng::normal_quantile(z);
        for (std::size_t c = 0; c < dim; ++c) out[c] = mean + sd * g;
    };
}

QuantileMap uniform(double lo, double hi, std::size_t dim) {
    return [=](double, double z, std::span<double> out) {
        for (std::size_t c = 0; c < dim; ++c) out[c] = lo + z * (hi - lo);
    };
}

QuantileMap label_value(std::size_t dim) {
    return [=](double u, double, std::span<double> out) {
        for (std::size_t c = 0; c < dim; ++c) out[c] = u;
    };
}

}  // namespace quantile_maps
}  // namespace gmfc
