#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "graphon_mfc/coefficients.hpp"

namespace gmfc {

// Control rule. Markov feedback reads (u, t, x) plus the current law
// view; open-loop tables read (u, step, Z) where Z is the particle's
// fixed uniform mark. General path-dependent policies are out of the
// runtime scope.
class Policy {
public:
    enum class Kind { kMarkovFeedback, kOpenLoop };

    using FeedbackFn =
        std::function<void(std::size_t u, double t, std::size_t step, std::span<const double> x,
                           const EvalContext&, std::span<double> out)>;
    using OpenLoopFn =
        std::function<void(std::size_t u, std::size_t step, double z, std::span<double> out)>;

    static Policy markov(FeedbackFn fn, double lipschitz_in_x = 0.0);
    static Policy open_loop(OpenLoopFn fn);
    static Policy constant_action(std::vector<double> action);
    // Uses lhs strictly before switch_step (a global step index), rhs after.
    static Policy piecewise(const Policy& lhs, const Policy& rhs, std::size_t switch_step);

    Kind kind() const { return kind_; }
    bool is_markov() const { return kind_ == Kind::kMarkovFeedback; }
    double lipschitz_in_x() const { return lipschitz_in_x_; }

    void evaluate(std::size_t u, double t, std::size_t step, std::span<const double> x, double z,
                  const EvalContext& ctx, std::span<double> out) const;

private:
    Kind kind_ = Kind::kOpenLoop;
    FeedbackFn feedback_;
    OpenLoopFn open_loop_;
    double lipschitz_in_x_ = 0.0;
};

}  // namespace gmfc
