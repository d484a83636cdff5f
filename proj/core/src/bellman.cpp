#include "graphon_mfc/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "graphon_mfc/numeric.hpp"

namespace gmfc {

double CandidateValue::value(double t, const MeasureCollection& mu, const Graphon* graphon) const {
    const MeasureView view = MeasureView::of_collection(mu, graphon);
    return at(t, view)->value();
}

namespace {

class TestFunctionEvaluationAdapter : public CandidateEvaluation {
public:
    TestFunctionEvaluationAdapter(const TestFunction& tf, double t, const MeasureView& mu)
        : eval_(tf.prepare(t, mu)) {}
    double value() const override { return eval_.value(); }
    double partial_t() const override { return eval_.partial_t(); }
    double flat(std::size_t u, std::span<const double> x) const override {
        return eval_.flat(u, x);
    }
    void grad(std::size_t u, std::span<const double> x, std::span<double> out) const override {
        eval_.grad(u, x, out);
    }
    void hess(std::size_t u, std::span<const double> x, std::span<double> out) const override {
        eval_.hess(u, x, out);
    }

private:
    TestFunctionEvaluator eval_;
};

}  // namespace

std::unique_ptr<CandidateEvaluation> TestFunctionCandidate::at(double t,
                                                               const MeasureView& mu) const {
    return std::make_unique<TestFunctionEvaluationAdapter>(tf_, t, mu);
}

LiftedCoupling LiftedCoupling::attach(std::shared_ptr<const MeasureCollection> mu,
                                      std::vector<std::vector<double>> actions,
                                      std::size_t action_dim) {
    if (!mu) throw InvalidArgument("LiftedCoupling: null marginal");
    if (actions.size() != mu->size()) {
        throw InvalidArgument("LiftedCoupling: one action block per label required");
    }
    LiftedCoupling pi;
    pi.marginal_target_ = std::move(mu);
    pi.dim_ = pi.marginal_target_->dim();
    pi.action_dim_ = action_dim;
    const std::size_t k_count = pi.marginal_target_->size();
    pi.xs_.resize(k_count);
    pi.as_ = std::move(actions);
    pi.ws_.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        const auto& m = pi.marginal_target_->measure(k);
        if (pi.as_[k].size() != m.size() * action_dim) {
            throw InvalidArgument("LiftedCoupling: action count must match atom count");
        }
        pi.xs_[k] = m.atoms_flat();
        pi.ws_[k].resize(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) pi.ws_[k][i] = m.weight(i);
    }
    return pi;
}

LiftedCoupling LiftedCoupling::constant_action(std::shared_ptr<const MeasureCollection> mu,
                                               std::vector<double> action) {
    if (!mu) throw InvalidArgument("LiftedCoupling: null marginal");
    const std::size_t q = action.size();
    std::vector<std::vector<double>> actions(mu->size());
    for (std::size_t k = 0; k < mu->size(); ++k) {
        const std::size_t n = mu->measure(k).size();
        actions[k].resize(n * q);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(action.begin(), action.end(), actions[k].begin() + i * q);
        }
    }
    return attach(std::move(mu), std::move(actions), q);
}

LiftedCoupling LiftedCoupling::mix(const LiftedCoupling& a, const LiftedCoupling& b,
                                   double theta) {
    if (a.marginal_target_ != b.marginal_target_) {
        throw InvalidArgument("LiftedCoupling::mix: couplings must share the marginal target");
    }
    if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidArgument("LiftedCoupling::mix: theta in [0,1]");
    LiftedCoupling out;
    out.marginal_target_ = a.marginal_target_;
    out.dim_ = a.dim_;
    out.action_dim_ = a.action_dim_;
    const std::size_t k_count = a.xs_.size();
    out.xs_.resize(k_count);
    out.as_.resize(k_count);
    out.ws_.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        out.xs_[k].reserve(a.xs_[k].size() + b.xs_[k].size());
        out.xs_[k].insert(out.xs_[k].end(), a.xs_[k].begin(), a.xs_[k].end());
        out.xs_[k].insert(out.xs_[k].end(), b.xs_[k].begin(), b.xs_[k].end());
        out.as_[k].reserve(a.as_[k].size() + b.as_[k].size());
        out.as_[k].insert(out.as_[k].end(), a.as_[k].begin(), a.as_[k].end());
        out.as_[k].insert(out.as_[k].end(), b.as_[k].begin(), b.as_[k].end());
        out.ws_[k].reserve(a.ws_[k].size() + b.ws_[k].size());
        for (double w : a.ws_[k]) out.ws_[k].push_back((1.0 - theta) * w);
        for (double w : b.ws_[k]) out.ws_[k].push_back(theta * w);
    }
    return out;
}

MeasureCollection LiftedCoupling::action_collection() const {
    std::vector<EmpiricalMeasure> per_label;
    per_label.reserve(as_.size());
    for (std::size_t k = 0; k < as_.size(); ++k) {
        per_label.emplace_back(action_dim_, as_[k], ws_[k]);
    }
    return MeasureCollection(marginal_target_->grid(), std::move(per_label));
}

namespace {

struct HamiltonianWorkspace {
    const CoefficientSet* coeffs;
    const MeasureView* state_view;
    const MeasureView* action_view;  // null for nu-independent models
    EvalContext ctx;
    HamiltonianWorkspace(const CoefficientSet& cs, const MeasureView& sv, const MeasureView* av)
        : coeffs(&cs), state_view(&sv), action_view(av),
          ctx(&sv, cs.nu_independent ? nullptr : av) {}
};

// integrand at one (x, a) atom given cached derivative values
double hamiltonian_point(const CoefficientSet& cs, const EvalContext& ctx, std::size_t u,
                         double t, std::span<const double> x, std::span<const double> a,
                         std::span<const double> grad, std::span<const double> hess,
                         std::span<double> b_buf, std::span<double> s_buf) {
    const std::size_t d = cs.state_dim;
    const std::size_t ell = cs.noise_dim;
    cs.drift(u, t, x, a, ctx, b_buf);
    cs.volatility(u, t, x, a, ctx, s_buf);
    double v = 0.0;
    for (std::size_t r = 0; r < d; ++r) v += grad[r] * b_buf[r];
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            double dot = 0.0;
            for (std::size_t e = 0; e < ell; ++e) dot += s_buf[r * ell + e] * s_buf[c * ell + e];
            v += 0.5 * hess[r * d + c] * dot;
        }
    }
    if (cs.running_cost) v += cs.running_cost(u, t, x, a, ctx);
    return v;
}

std::vector<std::vector<double>> action_grid_product(const ActionBox& box,
                                                     std::size_t points_per_dim) {
    const auto axes = box.axis_grids(points_per_dim);
    std::vector<std::vector<double>> out;
    std::vector<std::size_t> idx(box.dim(), 0);
    while (true) {
        std::vector<double> a(box.dim());
        for (std::size_t c = 0; c < box.dim(); ++c) a[c] = axes[c][idx[c]];
        out.push_back(std::move(a));
        std::size_t c = 0;
        for (; c < box.dim(); ++c) {
            if (++idx[c] < axes[c].size()) break;
            idx[c] = 0;
        }
        if (c == box.dim()) break;
    }
    return out;
}

}  // namespace

double hamiltonian(const CoefficientSet& coeffs, std::size_t u_index, double t,
                   const LiftedCoupling& pi, const CandidateValue& phi) {
    if (pi.dim() != coeffs.state_dim || pi.action_dim() != coeffs.action_dim) {
        throw InvalidArgument("hamiltonian: coupling dimensions do not match the model");
    }
    const Graphon* graphon = coeffs.uses_neighborhood ? coeffs.graphon.get() : nullptr;
    const MeasureView state_view = MeasureView::of_collection(pi.first_marginal(), graphon);
    MeasureCollection action_marginal;
    MeasureView action_view;
    const MeasureView* av = nullptr;
    if (!coeffs.nu_independent) {
        action_marginal = pi.action_collection();
        action_view = MeasureView::of_collection(action_marginal);
        av = &action_view;
    }
    const EvalContext ctx(&state_view, av);
    const auto eval = phi.at(t, state_view);

    const std::size_t d = coeffs.state_dim;
    const auto atoms = pi.atoms(u_index);
    std::vector<double> grad(d), hess(d * d);
    std::vector<double> b_buf(d), s_buf(d * coeffs.noise_dim);
    KahanSum acc;
    for (std::size_t i = 0; i < atoms.n; ++i) {
        const std::span<const double> x{atoms.xs + i * d, d};
        const std::span<const double> a{atoms.as + i * coeffs.action_dim, coeffs.action_dim};
        eval->grad(u_index, x, grad);
        eval->hess(u_index, x, hess);
        acc.add(atoms.ws[i] *
                hamiltonian_point(coeffs, ctx, u_index, t, x, a, grad, hess, b_buf, s_buf));
    }
    return acc.value();
}

BellmanReport bellman_report(const CoefficientSet& coeffs, const CandidateValue& phi, double t,
                             const MeasureCollection& mu, const FeedbackSearch& search) {
    const Graphon* graphon = coeffs.uses_neighborhood ? coeffs.graphon.get() : nullptr;
    const MeasureView state_view = MeasureView::of_collection(mu, graphon);
    const auto eval = phi.at(t, state_view);
    const auto actions = action_grid_product(coeffs.action_space, search.actions_per_dim);
    if (actions.empty()) throw InvalidArgument("bellman_residual: empty action grid");

    BellmanReport report;
    report.partial_t = eval->partial_t();
    double resolution = 0.0;
    for (std::size_t c = 0; c < coeffs.action_space.dim(); ++c) {
        resolution = std::max(resolution, (coeffs.action_space.hi[c] - coeffs.action_space.lo[c]) /
                                              static_cast<double>(search.actions_per_dim - 1));
    }
    report.grid_resolution = resolution;

    const std::size_t d = coeffs.state_dim;
    std::vector<double> grad(d), hess(d * d);
    std::vector<double> b_buf(d), s_buf(d * coeffs.noise_dim);

    if (coeffs.nu_independent) {
        const EvalContext ctx(&state_view, nullptr);
        KahanSum total;
        for (std::size_t k = 0; k < mu.size(); ++k) {
            const auto& m = mu.measure(k);
            KahanSum label_acc;
            for (std::size_t i = 0; i < m.size(); ++i) {
                const auto x = m.atom(i);
                eval->grad(k, x, grad);
                eval->hess(k, x, hess);
                double best = std::numeric_limits<double>::infinity();
                for (const auto& a : actions) {
                    best = std::min(best, hamiltonian_point(coeffs, ctx, k, t, x, a, grad, hess,
                                                            b_buf, s_buf));
                }
                label_acc.add(m.weight(i) * best);
            }
            total.add(mu.grid().weight(k) * label_acc.value());
        }
        report.minimized_value = total.value();
    } else {
        // joint assignment search: the action law depends on the whole
        // assignment, so enumerate tuples over all atoms
        std::size_t total_atoms = 0;
        for (std::size_t k = 0; k < mu.size(); ++k) total_atoms += mu.measure(k).size();
        double combos = std::pow(static_cast<double>(actions.size()),
                                 static_cast<double>(total_atoms));
        if (!(combos <= static_cast<double>(search.joint_budget))) {
            throw InvalidArgument(
                "bellman_residual: joint assignment enumeration budget exceeded");
        }
        auto marginal = std::make_shared<const MeasureCollection>(mu);
        std::vector<std::size_t> assignment(total_atoms, 0);
        double best = std::numeric_limits<double>::infinity();
        while (true) {
            std::vector<std::vector<double>> attach(mu.size());
            std::size_t flat = 0;
            for (std::size_t k = 0; k < mu.size(); ++k) {
                const std::size_t n = mu.measure(k).size();
                attach[k].resize(n * coeffs.action_dim);
                for (std::size_t i = 0; i < n; ++i, ++flat) {
                    const auto& a = actions[assignment[flat]];
                    std::copy(a.begin(), a.end(), attach[k].begin() + i * coeffs.action_dim);
                }
            }
            const LiftedCoupling pi =
                LiftedCoupling::attach(marginal, std::move(attach), coeffs.action_dim);
            KahanSum total;
            for (std::size_t k = 0; k < mu.size(); ++k) {
                total.add(mu.grid().weight(k) * hamiltonian(coeffs, k, t, pi, phi));
            }
            best = std::min(best, total.value());
            std::size_t c = 0;
            for (; c < total_atoms; ++c) {
                if (++assignment[c] < actions.size()) break;
                assignment[c] = 0;
            }
            if (c == total_atoms) break;
        }
        report.minimized_value = best;
    }
    report.residual = -report.partial_t - report.minimized_value;
    return report;
}

double bellman_residual(const CoefficientSet& coeffs, const CandidateValue& phi, double t,
                        const MeasureCollection& mu, const FeedbackSearch& search) {
    return bellman_report(coeffs, phi, t, mu, search).residual;
}

double terminal_residual(const CoefficientSet& coeffs, const CandidateValue& phi, double T,
                         const MeasureCollection& mu) {
    const Graphon* graphon = coeffs.uses_neighborhood ? coeffs.graphon.get() : nullptr;
    const MeasureView view = MeasureView::of_collection(mu, graphon);
    const EvalContext ctx(&view, nullptr);
    KahanSum g_acc;
    if (coeffs.terminal_cost) {
        for (std::size_t k = 0; k < mu.size(); ++k) {
            const auto& m = mu.measure(k);
            KahanSum label_acc;
            for (std::size_t i = 0; i < m.size(); ++i) {
                label_acc.add(m.weight(i) * coeffs.terminal_cost(k, m.atom(i), ctx));
            }
            g_acc.add(mu.grid().weight(k) * label_acc.value());
        }
    }
    return phi.at(T, view)->value() - g_acc.value();
}

namespace {

// lambda-weighted mean of per-particle samples arr1[i] + arr2[i]; the
// shared expression tree keeps one-shot and restarted cost aggregates
// bitwise comparable.
CostEstimate aggregate_two(const LabelGrid& grid, const std::vector<std::vector<double>>& arr1,
                           const std::vector<std::vector<double>>& arr2) {
    KahanSum value_acc, var_acc;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const std::size_t n = arr1[k].size();
        KahanSum mean_acc;
        for (std::size_t i = 0; i < n; ++i) mean_acc.add(arr1[k][i] + arr2[k][i]);
        const double mean = mean_acc.value() / static_cast<double>(n);
        KahanSum sq_acc;
        for (std::size_t i = 0; i < n; ++i) sq_acc.add(sq(arr1[k][i] + arr2[k][i] - mean));
        value_acc.add(grid.weight(k) * mean);
        if (n > 1) {
            var_acc.add(sq(grid.weight(k)) * sq_acc.value() / static_cast<double>(n - 1) /
                        static_cast<double>(n));
        }
    }
    return {value_acc.value(), std::sqrt(std::max(0.0, var_acc.value()))};
}

}  // namespace

DppReport dpp_check(const CoefficientSet& coeffs, const std::vector<Policy>& control_grid,
                    const ParticleEnsemble& init, double t, double theta, double T,
                    std::size_t steps, std::uint64_t seed) {
    if (control_grid.empty()) throw InvalidArgument("dpp_check: empty control grid");
    if (control_grid.size() * control_grid.size() > 400) {
        throw InvalidArgument("dpp_check: control grid budget exceeded (need <= 20 policies)");
    }
    if (!(t < theta && theta < T)) throw InvalidArgument("dpp_check: need t < theta < T");
    const TimeWindow full = TimeWindow::span(t, T, steps);
    const double k1_real = (theta - t) / full.dt;
    const std::size_t k1 = static_cast<std::size_t>(std::llround(k1_real));
    if (k1 == 0 || k1 >= steps || std::abs(k1_real - static_cast<double>(k1)) > 1e-9) {
        throw InvalidArgument("dpp_check: theta must lie on the step grid strictly inside (t, T)");
    }

    const std::size_t n_pol = control_grid.size();
    const std::size_t k_count = init.grid().size();
    const std::size_t n = init.particles_per_label();
    const std::vector<std::vector<double>> zeros(k_count, std::vector<double>(n, 0.0));

    // nested branch: stage one per policy, continuation per pair
    TimeWindow stage1 = full;
    stage1.steps = k1;
    std::vector<CostEstimate> run(n_pol);
    std::vector<ParticleEnsemble> mid(n_pol);
    SimOptions stage1_opts;
    stage1_opts.store_paths = false;
    stage1_opts.include_terminal_cost = false;
    for (std::size_t i = 0; i < n_pol; ++i) {
        SimulationResult r = simulate(coeffs, control_grid[i], init, stage1, seed, stage1_opts);
        run[i] = aggregate_two(init.grid(), r.run_cost_pre, r.run_cost_post);
        mid[i] = std::move(r.final_ensemble);
    }
    TimeWindow stage2 = stage1.continuation(steps - k1);
    SimOptions stage2_opts;
    stage2_opts.store_paths = false;
    std::vector<std::vector<CostEstimate>> cont(n_pol, std::vector<CostEstimate>(n_pol));
    for (std::size_t i = 0; i < n_pol; ++i) {
        for (std::size_t j = 0; j < n_pol; ++j) {
            SimulationResult r =
                simulate(coeffs, control_grid[j], mid[i], stage2, seed, stage2_opts);
            cont[i][j] = aggregate_two(init.grid(), r.run_cost_pre, r.terminal_cost);
        }
    }
    double rhs = std::numeric_limits<double>::infinity();
    double rhs_se = 0.0;
    for (std::size_t i = 0; i < n_pol; ++i) {
        double best_cont = std::numeric_limits<double>::infinity();
        double best_cont_se = 0.0;
        for (std::size_t j = 0; j < n_pol; ++j) {
            if (cont[i][j].value < best_cont) {
                best_cont = cont[i][j].value;
                best_cont_se = cont[i][j].std_error;
            }
        }
        const double candidate = run[i].value + best_cont;
        if (candidate < rhs) {
            rhs = candidate;
            rhs_se = std::sqrt(sq(run[i].std_error) + sq(best_cont_se));
        }
    }

    // one-shot branch: full-horizon piecewise controls
    double lhs = std::numeric_limits<double>::infinity();
    double lhs_se = 0.0;
    SimOptions full_opts;
    full_opts.store_paths = false;
    full_opts.cost_checkpoint = k1;
    for (std::size_t i = 0; i < n_pol; ++i) {
        for (std::size_t j = 0; j < n_pol; ++j) {
            const Policy piecewise = Policy::piecewise(control_grid[i], control_grid[j], k1);
            SimulationResult r = simulate(coeffs, piecewise, init, full, seed, full_opts);
            const CostEstimate head = aggregate_two(init.grid(), r.run_cost_pre, zeros);
            const CostEstimate tail = aggregate_two(init.grid(), r.run_cost_post, r.terminal_cost);
            const double value = head.value + tail.value;
            if (value < lhs) {
                lhs = value;
                lhs_se = std::sqrt(sq(head.std_error) + sq(tail.std_error));
            }
        }
    }

    DppReport report;
    report.lhs = lhs;
    report.rhs = rhs;
    report.gap = lhs - rhs;
    report.lhs_se = lhs_se;
    report.rhs_se = rhs_se;
    report.pooled_se = std::sqrt(sq(lhs_se) + sq(rhs_se));
    report.branches = n_pol * n_pol;
    return report;
}

VerificationReport verify_policy(const CoefficientSet& coeffs, const CandidateValue& phi,
                                 const Policy& feedback, const ParticleEnsemble& init, double t0,
                                 double T, std::size_t steps, std::uint64_t seed,
                                 std::size_t residual_samples, const FeedbackSearch& search) {
    if (!feedback.is_markov()) {
        throw InvalidArgument("verify_policy: feedback must be a Markov policy");
    }
    SimOptions opts;
    opts.store_paths = true;
    const SimulationResult result = simulate(coeffs, feedback, init, t0, T, steps, seed, opts);

    VerificationReport report;
    const Graphon* graphon = coeffs.uses_neighborhood ? coeffs.graphon.get() : nullptr;
    report.phi_at_init = phi.value(t0, init.collection(), graphon);
    report.simulated_cost = cost(coeffs, result);

    const std::size_t count = std::max<std::size_t>(1, residual_samples);
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t j = (s * steps) / count;  // in [0, steps)
        const double tj = result.window.time_at(j);
        const MeasureCollection mu_j = result.flow.collection_at(j);
        report.sampled_times.push_back(tj);
        report.bellman_residuals.push_back(bellman_residual(coeffs, phi, tj, mu_j, search));
        report.max_abs_bellman_residual =
            std::max(report.max_abs_bellman_residual, std::abs(report.bellman_residuals.back()));
    }
    report.terminal_residual =
        terminal_residual(coeffs, phi, T, result.flow.collection_at(steps));
    return report;
}

}  // namespace gmfc
