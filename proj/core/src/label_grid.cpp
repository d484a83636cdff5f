#include "graphon_mfc/label_grid.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "graphon_mfc/numeric.hpp"

namespace gmfc {

LabelGrid::LabelGrid(std::vector<double> labels, std::vector<double> weights)
    : labels_(std::move(labels)), weights_(std::move(weights)) {
    if (labels_.empty() || labels_.size() != weights_.size()) {
        throw InvalidArgument("LabelGrid: labels/weights must be non-empty and equal-sized");
    }
    std::unordered_set<double> seen;
    for (double u : labels_) {
        if (!std::isfinite(u) || !seen.insert(u).second) {
            throw InvalidArgument("LabelGrid: labels must be finite and distinct");
        }
    }
    KahanSum total;
    min_weight_ = weights_[0];
    for (double w : weights_) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw InvalidArgument("LabelGrid: weights must be strictly positive");
        }
        total.add(w);
        min_weight_ = std::min(min_weight_, w);
    }
    total_mass_ = total.value();
}

LabelGrid LabelGrid::uniform(std::size_t count, double total_mass) {
    if (count == 0) throw InvalidArgument("LabelGrid::uniform: count must be >= 1");
    std::vector<double> labels(count), weights(count, total_mass / static_cast<double>(count));
    for (std::size_t k = 0; k < count; ++k) {
        // midpoints of [0,1] cells
        labels[k] = (static_cast<double>(k) + 0.5) / static_cast<double>(count);
    }
    return LabelGrid(std::move(labels), std::move(weights));
}

}  // namespace gmfc
