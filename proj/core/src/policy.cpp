#include "graphon_mfc/policy.hpp"

#include "graphon_mfc/numeric.hpp"

namespace gmfc {

Policy Policy::markov(FeedbackFn fn, double lipschitz_in_x) {
    Policy p;
    p.kind_ = Kind::kMarkovFeedback;
    p.feedback_ = std::move(fn);
    p.lipschitz_in_x_ = lipschitz_in_x;
    return p;
}

Policy Policy::open_loop(OpenLoopFn fn) {
    Policy p;
    p.kind_ = Kind::kOpenLoop;
    p.open_loop_ = std::move(fn);
    return p;
}

Policy Policy::constant_action(std::vector<double> action) {
    return open_loop([action = std::move(action)](std::size_t, std::size_t, double,
                                                  std::span<double> out) {
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = action[c % action.size()];
    });
}

Policy Policy::piecewise(const Policy& lhs, const Policy& rhs, std::size_t switch_step) {
    if (lhs.kind_ != rhs.kind_) {
        throw InvalidArgument("Policy::piecewise: pieces must share the same kind");
    }
    Policy p;
    p.kind_ = lhs.kind_;
    if (p.kind_ == Kind::kMarkovFeedback) {
        p.lipschitz_in_x_ = std::max(lhs.lipschitz_in_x_, rhs.lipschitz_in_x_);
        p.feedback_ = [lhs, rhs, switch_step](std::size_t u, double t, std::size_t step,
                                              std::span<const double> x, const EvalContext& ctx,
                                              std::span<double> out) {
            const Policy& active = step < switch_step ? lhs : rhs;
            active.feedback_(u, t, step, x, ctx, out);
        };
    } else {
        p.open_loop_ = [lhs, rhs, switch_step](std::size_t u, std::size_t step, double z,
                                               std::span<double> out) {
            const Policy& active = step < switch_step ? lhs : rhs;
            active.open_loop_(u, step, z, out);
        };
    }
    return p;
}

void Policy::evaluate(std::size_t u, double t, std::size_t step, std::span<const double> x,
                      double z, const EvalContext& ctx, std::span<double> out) const {
    if (kind_ == Kind::kMarkovFeedback) {
        if (!feedback_) throw InvalidArgument("Policy: missing feedback function");
        feedback_(u, t, step, x, ctx, out);
    } else {
        if (!open_loop_) throw InvalidArgument("Policy: missing open-loop table");
        open_loop_(u, step, z, out);
    }
}

}  // namespace gmfc
