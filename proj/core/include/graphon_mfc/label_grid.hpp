#pragma once

#include <cstddef>
#include <vector>

namespace gmfc {

// Discretization of the label space (U, lambda): finitely many labels
// u_k with strictly positive weights lambda_k. All lambda-integrals in
// the library are quadratures against these weights.
class LabelGrid {
public:
    LabelGrid() = default;
    LabelGrid(std::vector<double> labels, std::vector<double> weights);

    // K equispaced labels in [0,1] carrying uniform weight total/K.
    static LabelGrid uniform(std::size_t count, double total_mass = 1.0);

    std::size_t size() const { return labels_.size(); }
    double label(std::size_t k) const { return labels_[k]; }
    double weight(std::size_t k) const { return weights_[k]; }
    const std::vector<double>& labels() const { return labels_; }
    const std::vector<double>& weights() const { return weights_; }
    double total_mass() const { return total_mass_; }
    double min_weight() const { return min_weight_; }

    bool operator==(const LabelGrid& other) const {
        return labels_ == other.labels_ && weights_ == other.weights_;
    }

private:
    std::vector<double> labels_;
    std::vector<double> weights_;
    double total_mass_ = 0.0;
    double min_weight_ = 0.0;
};

}  // namespace gmfc
