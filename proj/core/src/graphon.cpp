#include "graphon_mfc/graphon.hpp"

#include <cmath>

#include "graphon_mfc/numeric.hpp"

namespace gmfc {

Graphon::Graphon(const LabelGrid& grid, std::vector<double> dense)
    : dense_(std::move(dense)), grid_weights_(grid.weights()) {
    const std::size_t k = grid.size();
    if (dense_.size() != k * k) throw InvalidArgument("Graphon: dense kernel size mismatch");
    for (double v : dense_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InvalidArgument("Graphon: kernel values must lie in [0,1]");
        }
    }
    degree_.resize(k);
    for (std::size_t u = 0; u < k; ++u) {
        KahanSum row;
        for (std::size_t v = 0; v < k; ++v) row.add(dense_[u * k + v] * grid.weight(v));
        degree_[u] = row.value();
    }
}

Graphon Graphon::constant(const LabelGrid& grid, double value) {
    return Graphon(grid, std::vector<double>(grid.size() * grid.size(), value));
}

Graphon Graphon::product(const LabelGrid& grid) {
    const std::size_t k = grid.size();
    std::vector<double> dense(k * k);
    for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) dense[u * k + v] = grid.label(u) * grid.label(v);
    }
    return Graphon(grid, std::move(dense));
}

Graphon Graphon::identity(const LabelGrid& grid) {
    const std::size_t k = grid.size();
    std::vector<double> dense(k * k, 0.0);
    for (std::size_t u = 0; u < k; ++u) dense[u * k + u] = 1.0;
    return Graphon(grid, std::move(dense));
}

Graphon Graphon::from_kernel(const LabelGrid& grid,
                             const std::function<double(double, double)>& kernel) {
    const std::size_t k = grid.size();
    std::vector<double> dense(k * k);
    for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) dense[u * k + v] = kernel(grid.label(u), grid.label(v));
    }
    return Graphon(grid, std::move(dense));
}

Graphon Graphon::from_matrix(const LabelGrid& grid, std::vector<double> dense) {
    return Graphon(grid, std::move(dense));
}

std::vector<double> Graphon::mixture_weights(std::size_t u) const {
    if (zero_row(u)) {
        throw InvalidArgument("Graphon: zero interaction degree at label " + std::to_string(u));
    }
    const std::size_t k = size();
    std::vector<double> w(k);
    for (std::size_t v = 0; v < k; ++v) {
        w[v] = dense_[u * k + v] * grid_weights_[v] / degree_[u];
    }
    return w;
}

EmpiricalMeasure graphon_neighborhood(const Graphon& g, const MeasureCollection& mu,
                                      std::size_t u_index, ZeroDegreePolicy policy) {
    if (g.size() != mu.size()) throw InvalidArgument("graphon_neighborhood: grid mismatch");
    if (g.zero_row(u_index)) {
        if (policy == ZeroDegreePolicy::kDiracOrigin) {
            return EmpiricalMeasure(mu.dim(), std::vector<double>(mu.dim(), 0.0));
        }
        throw InvalidArgument("graphon_neighborhood: zero interaction degree at label " +
                              std::to_string(u_index));
    }
    const auto mix = g.mixture_weights(u_index);
    const std::size_t d = mu.dim();
    std::vector<double> atoms;
    std::vector<double> weights;
    for (std::size_t v = 0; v < mu.size(); ++v) {
        if (mix[v] == 0.0) continue;
        const auto& m = mu.measure(v);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const auto x = m.atom(i);
            atoms.insert(atoms.end(), x.begin(), x.end());
            weights.push_back(mix[v] * m.weight(i));
        }
    }
    return EmpiricalMeasure(d, std::move(atoms), std::move(weights));
}

}  // namespace gmfc
