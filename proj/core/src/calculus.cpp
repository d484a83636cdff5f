#include "graphon_mfc/calculus.hpp"

#include <algorithm>
#include <cmath>

#include "graphon_mfc/numeric.hpp"

namespace gmfc {

double evaluate(const TestFunction& tf, double t, const MeasureCollection& mu) {
    return tf.evaluate(t, MeasureView::of_collection(mu));
}

double flat_derivative(const TestFunction& tf, double t, const MeasureCollection& mu,
                       std::size_t u_index, std::span<const double> x) {
    return tf.flat_derivative(t, MeasureView::of_collection(mu), u_index, x);
}

std::vector<double> grad_x_flat(const TestFunction& tf, double t, const MeasureCollection& mu,
                                std::size_t u_index, std::span<const double> x) {
    std::vector<double> out(mu.dim());
    tf.grad_x_flat(t, MeasureView::of_collection(mu), u_index, x, out);
    return out;
}

std::vector<double> hess_x_flat(const TestFunction& tf, double t, const MeasureCollection& mu,
                                std::size_t u_index, std::span<const double> x) {
    std::vector<double> out(mu.dim() * mu.dim());
    tf.hess_x_flat(t, MeasureView::of_collection(mu), u_index, x, out);
    return out;
}

double flat_pairing(const TestFunction& tf, double t, const MeasureCollection& mu,
                    const MeasureCollection& nu) {
    if (!(mu.grid() == nu.grid()) || mu.dim() != nu.dim()) {
        throw InvalidArgument("flat_pairing: grid/dimension mismatch");
    }
    const MeasureView mu_view = MeasureView::of_collection(mu);
    KahanSum acc;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        KahanSum label_acc;
        const auto& target = nu.measure(k);
        for (std::size_t i = 0; i < target.size(); ++i) {
            label_acc.add(target.weight(i) *
                          tf.flat_derivative(t, mu_view, k, target.atom(i)));
        }
        const auto& base = mu.measure(k);
        for (std::size_t i = 0; i < base.size(); ++i) {
            label_acc.add(-base.weight(i) * tf.flat_derivative(t, mu_view, k, base.atom(i)));
        }
        acc.add(mu.grid().weight(k) * label_acc.value());
    }
    return acc.value();
}

GateauxReport gateaux_check(const TestFunction& tf, double t, const MeasureCollection& mu,
                            const MeasureCollection& nu, std::vector<double> epsilons) {
    GateauxReport report;
    report.epsilons = std::move(epsilons);
    report.pairing = flat_pairing(tf, t, mu, nu);
    const double v0 = evaluate(tf, t, mu);
    double scale = std::max({1.0, std::abs(v0), std::abs(report.pairing)});
    for (double eps : report.epsilons) {
        const double v_eps = evaluate(tf, t, mix_collections(mu, nu, eps));
        const double fd = (v_eps - v0) / eps;
        report.finite_differences.push_back(fd);
        report.errors.push_back(std::abs(fd - report.pairing));
    }
    const double exact_tol = 1e-12 * scale;
    report.exact = std::all_of(report.errors.begin(), report.errors.end(),
                               [&](double e) { return e <= exact_tol; });
    if (!report.exact) {
        // least squares slope of log(error) against log(eps)
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        std::size_t used = 0;
        for (std::size_t i = 0; i < report.epsilons.size(); ++i) {
            if (report.errors[i] <= 0.0) continue;
            const double lx = std::log(report.epsilons[i]);
            const double ly = std::log(report.errors[i]);
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            ++used;
        }
        if (used >= 2) {
            const double denom = static_cast<double>(used) * sxx - sx * sx;
            if (denom != 0.0) {
                report.fitted_slope = (static_cast<double>(used) * sxy - sx * sy) / denom;
            }
        }
    }
    return report;
}

namespace {

// Shared chain-rule accumulator: consumes one integrand point.
class ItoAccumulator {
public:
    ItoAccumulator(const TestFunction& tf, double dt, TimeQuadrature quad)
        : tf_(&tf), dt_(dt), quad_(quad) {}

    void consume(const StepData& data) {
        const double t_eval =
            quad_ == TimeQuadrature::kMidpoint ? data.t + 0.5 * dt_ : data.t;
        const MeasureView& mu = data.ctx->states();
        const TestFunctionEvaluator eval = tf_->prepare(t_eval, mu);
        KahanSum integrand;
        if (tf_->time_dependent()) integrand.add(eval.partial_t());
        const std::size_t d = data.dim;
        const std::size_t ell = data.noise_dim;
        std::vector<double> grad(d), hess(d * d);
        for (std::size_t k = 0; k < data.labels; ++k) {
            const auto xs = data.states(k);
            const auto bs = data.drifts(k);
            const auto ss = data.vols(k);
            KahanSum label_acc;
            for (std::size_t i = 0; i < data.particles; ++i) {
                const std::span<const double> x{xs.data() + i * d, d};
                eval.grad(k, x, grad);
                eval.hess(k, x, hess);
                double term = 0.0;
                for (std::size_t r = 0; r < d; ++r) term += grad[r] * bs[i * d + r];
                // (1/2) Hess : sigma sigma^T
                for (std::size_t r = 0; r < d; ++r) {
                    for (std::size_t c = 0; c < d; ++c) {
                        double dot = 0.0;
                        for (std::size_t e = 0; e < ell; ++e) {
                            dot += ss[(i * d + r) * ell + e] * ss[(i * d + c) * ell + e];
                        }
                        term += 0.5 * hess[r * d + c] * dot;
                    }
                }
                label_acc.add(term);
            }
            integrand.add(mu.grid().weight(k) * label_acc.value() /
                          static_cast<double>(data.particles));
        }
        rhs_.add(dt_ * integrand.value());
    }

    double rhs() const { return rhs_.value(); }

private:
    const TestFunction* tf_;
    double dt_;
    TimeQuadrature quad_;
    KahanSum rhs_;
};

}  // namespace

ItoReport ito_residual(const TestFunction& tf, const SimulationResult& result,
                       const CoefficientSet& coeffs, const Policy& policy,
                       TimeQuadrature quad) {
    const MeasureFlow& flow = result.flow;
    if (!flow.is_path_coupled()) {
        throw InvalidArgument("ito_residual: result must carry path-coupled trajectories");
    }
    const LabelGrid& grid = coeffs.grid;
    const std::size_t k_count = grid.size();
    const std::size_t n = flow.particles_per_label();
    const std::size_t d = coeffs.state_dim;
    const std::size_t ell = coeffs.noise_dim;
    const std::size_t q = coeffs.action_dim;
    const std::size_t steps = flow.steps();
    const double dt = result.window.dt;
    const Graphon* graphon = coeffs.uses_neighborhood ? coeffs.graphon.get() : nullptr;

    ItoAccumulator acc(tf, dt, quad);
    std::vector<std::vector<double>> actions(k_count, std::vector<double>(n * q));
    std::vector<std::vector<double>> drifts(k_count, std::vector<double>(n * d));
    std::vector<std::vector<double>> vols(k_count, std::vector<double>(n * d * ell));

    for (std::size_t j = 0; j < steps; ++j) {
        const double t = result.window.time_at(j);
        std::vector<CloudView> clouds(k_count);
        for (std::size_t k = 0; k < k_count; ++k) {
            clouds[k] = {flow.state_block(k, j).data(), nullptr, n};
        }
        const MeasureView state_view(&grid, d, std::move(clouds), graphon);
        const EvalContext state_ctx(&state_view, nullptr);
        for (std::size_t k = 0; k < k_count; ++k) {
            const auto xs = flow.state_block(k, j);
            for (std::size_t i = 0; i < n; ++i) {
                policy.evaluate(k, t, result.window.offset + j, {xs.data() + i * d, d},
                                result.initial_ensemble.uniform_mark(k, i), state_ctx,
                                {actions[k].data() + i * q, q});
            }
        }
        MeasureView action_view;
        const bool needs_nu = !coeffs.nu_independent;
        if (needs_nu) {
            std::vector<CloudView> aclouds(k_count);
            for (std::size_t k = 0; k < k_count; ++k) {
                aclouds[k] = {actions[k].data(), nullptr, n};
            }
            action_view = MeasureView(&grid, q, std::move(aclouds), nullptr);
        }
        const EvalContext ctx(&state_view, needs_nu ? &action_view : nullptr);
        for (std::size_t k = 0; k < k_count; ++k) {
            const auto xs = flow.state_block(k, j);
            for (std::size_t i = 0; i < n; ++i) {
                const std::span<const double> x{xs.data() + i * d, d};
                const std::span<const double> a{actions[k].data() + i * q, q};
                coeffs.drift(k, t, x, a, ctx, {drifts[k].data() + i * d, d});
                coeffs.volatility(k, t, x, a, ctx, {vols[k].data() + i * d * ell, d * ell});
            }
        }
        StepData data;
        data.local_step = j;
        data.t = t;
        data.ctx = &ctx;
        data.labels = k_count;
        data.particles = n;
        data.dim = d;
        data.noise_dim = ell;
        data.action_dim = q;
        data.states = [&](std::size_t k) { return flow.state_block(k, j); };
        data.drifts = [&](std::size_t k) {
            return std::span<const double>{drifts[k].data(), n * d};
        };
        data.vols = [&](std::size_t k) {
            return std::span<const double>{vols[k].data(), n * d * ell};
        };
        data.actions = [&](std::size_t k) {
            return std::span<const double>{actions[k].data(), n * q};
        };
        acc.consume(data);
    }

    ItoReport report;
    const double t0 = result.window.start();
    const double t1 = result.window.end();
    report.lhs = tf.evaluate(t1, MeasureView::of_collection(flow.collection_at(steps))) -
                 tf.evaluate(t0, MeasureView::of_collection(flow.collection_at(0)));
    report.rhs = acc.rhs();
    report.residual = report.lhs - report.rhs;
    return report;
}

ItoReport ito_residual_streaming(const TestFunction& tf, const CoefficientSet& coeffs,
                                 const Policy& policy, const ParticleEnsemble& init,
                                 const TimeWindow& window, std::uint64_t seed,
                                 TimeQuadrature quad) {
    ItoAccumulator acc(tf, window.dt, quad);
    SimOptions opts;
    opts.store_paths = false;
    opts.observer = [&acc](const StepData& data) { acc.consume(data); };
    const SimulationResult result = simulate(coeffs, policy, init, window, seed, opts);
    ItoReport report;
    report.lhs =
        tf.evaluate(window.end(), MeasureView::of_collection(result.final_ensemble.collection())) -
        tf.evaluate(window.start(), MeasureView::of_collection(init.collection()));
    report.rhs = acc.rhs();
    report.residual = report.lhs - report.rhs;
    return report;
}

}  // namespace gmfc
