#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace gmfc {

// Neumaier-compensated accumulator. Reductions that feed costs and
// empirical moments go through this so results stay stable to ~1 ulp
// under particle permutations and chunked (threaded) evaluation.
class KahanSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double stable_sum(std::span<const double> xs) {
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

inline double sq(double x) { return x * x; }

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gmfc
