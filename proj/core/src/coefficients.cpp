#include "graphon_mfc/coefficients.hpp"

#include <cmath>

#include "graphon_mfc/numeric.hpp"

namespace gmfc {

MeasureView::MeasureView(const LabelGrid* grid, std::size_t dim, std::vector<CloudView> clouds,
                         const Graphon* graphon)
    : grid_(grid), dim_(dim), clouds_(std::move(clouds)) {
    const std::size_t k_count = clouds_.size();
    means_.assign(k_count * dim_, 0.0);
    second_tot_.assign(k_count, 0.0);
    KahanSum coll;
    for (std::size_t k = 0; k < k_count; ++k) {
        const CloudView& c = clouds_[k];
        std::vector<KahanSum> mean_acc(dim_);
        KahanSum second_acc;
        const double uniform_w = c.n > 0 ? 1.0 / static_cast<double>(c.n) : 0.0;
        for (std::size_t i = 0; i < c.n; ++i) {
            const double w = c.ws ? c.ws[i] : uniform_w;
            const double* x = c.xs + i * dim_;
            for (std::size_t d = 0; d < dim_; ++d) {
                mean_acc[d].add(w * x[d]);
                second_acc.add(w * x[d] * x[d]);
            }
        }
        for (std::size_t d = 0; d < dim_; ++d) means_[k * dim_ + d] = mean_acc[d].value();
        second_tot_[k] = second_acc.value();
        coll.add(grid_->weight(k) * second_tot_[k]);
    }
    coll_second_ = coll.value();

    if (graphon != nullptr) {
        nbhd_means_.assign(k_count * dim_, 0.0);
        for (std::size_t u = 0; u < k_count; ++u) {
            const auto mix = graphon->mixture_weights(u);
            for (std::size_t d = 0; d < dim_; ++d) {
                KahanSum acc;
                for (std::size_t v = 0; v < k_count; ++v) acc.add(mix[v] * means_[v * dim_ + d]);
                nbhd_means_[u * dim_ + d] = acc.value();
            }
        }
    }
}

MeasureView MeasureView::of_collection(const MeasureCollection& mc, const Graphon* graphon) {
    auto owned = std::make_shared<std::vector<std::vector<double>>>(mc.size());
    std::vector<CloudView> clouds(mc.size());
    for (std::size_t k = 0; k < mc.size(); ++k) {
        const auto& m = mc.measure(k);
        clouds[k].xs = m.atoms_flat().data();
        clouds[k].n = m.size();
        if (!m.uniform_weights()) {
            auto& ws = (*owned)[k];
            ws.resize(m.size());
            for (std::size_t i = 0; i < m.size(); ++i) ws[i] = m.weight(i);
            clouds[k].ws = ws.data();
        }
    }
    MeasureView view(&mc.grid(), mc.dim(), std::move(clouds), graphon);
    view.owned_weights_ = std::move(owned);
    view.source_ = &mc;
    return view;
}

std::span<const double> MeasureView::neighborhood_mean(std::size_t k) const {
    if (nbhd_means_.empty()) {
        throw InvalidArgument("MeasureView: neighborhood aggregates not built (no graphon)");
    }
    return {nbhd_means_.data() + k * dim_, dim_};
}

const MeasureCollection& MeasureView::materialize() const {
    if (source_ != nullptr) return *source_;
    if (!materialized_) {
        std::vector<EmpiricalMeasure> per_label;
        per_label.reserve(clouds_.size());
        for (const auto& c : clouds_) {
            std::vector<double> atoms(c.xs, c.xs + c.n * dim_);
            std::vector<double> weights;
            if (c.ws) weights.assign(c.ws, c.ws + c.n);
            per_label.emplace_back(dim_, std::move(atoms), std::move(weights));
        }
        materialized_ = std::make_shared<MeasureCollection>(*grid_, std::move(per_label));
    }
    return *materialized_;
}

const MeasureView& EvalContext::states() const {
    if (states_ == nullptr) throw InvalidArgument("EvalContext: state law missing");
    return *states_;
}

const MeasureView& EvalContext::actions() const {
    if (actions_ == nullptr) {
        throw InvalidArgument("EvalContext: action law requested by a nu-independent evaluation");
    }
    return *actions_;
}

ActionBox ActionBox::symmetric(std::size_t q, double half_width) {
    ActionBox box;
    box.lo.assign(q, -half_width);
    box.hi.assign(q, half_width);
    box.origin.assign(q, 0.0);
    return box;
}

bool ActionBox::contains(std::span<const double> a, double slack) const {
    for (std::size_t c = 0; c < dim(); ++c) {
        if (a[c] < lo[c] - slack || a[c] > hi[c] + slack) return false;
    }
    return true;
}

std::vector<std::vector<double>> ActionBox::axis_grids(std::size_t points_per_dim) const {
    if (points_per_dim < 2) throw InvalidArgument("ActionBox: need at least 2 grid points per axis");
    std::vector<std::vector<double>> grids(dim());
    for (std::size_t c = 0; c < dim(); ++c) {
        grids[c].resize(points_per_dim);
        for (std::size_t i = 0; i < points_per_dim; ++i) {
            const double s = static_cast<double>(i) / static_cast<double>(points_per_dim - 1);
            grids[c][i] = lo[c] + s * (hi[c] - lo[c]);
        }
    }
    return grids;
}

double graphon_mean_lipschitz(const Graphon& g, const LabelGrid& grid) {
    // |sum_v w_uv (m_v - m_v')| <= sqrt(sum_v w_uv^2 / lambda_v) d(mu, mu')
    double worst = 0.0;
    for (std::size_t u = 0; u < g.size(); ++u) {
        if (g.zero_row(u)) continue;
        const auto mix = g.mixture_weights(u);
        double s = 0.0;
        for (std::size_t v = 0; v < mix.size(); ++v) s += mix[v] * mix[v] / grid.weight(v);
        worst = std::max(worst, std::sqrt(s));
    }
    return worst;
}

CoefficientSet make_graphon_lq(const LabelGrid& grid, std::shared_ptr<const Graphon> graphon,
                               LabelPoly state_cost, double sigma0, double action_half_width) {
    for (double u : grid.labels()) {
        if (state_cost(u) < 0.0) throw InvalidArgument("make_graphon_lq: state cost must be >= 0");
    }
    if (sigma0 < 0.0) throw InvalidArgument("make_graphon_lq: sigma0 must be >= 0");
    CoefficientSet cs;
    cs.family = "graphon-lq";
    cs.grid = grid;
    cs.graphon = std::move(graphon);
    cs.uses_neighborhood = true;
    cs.nu_independent = true;
    cs.strengthened_growth = true;  // |b| <= a_max, sigma constant
    cs.action_space = ActionBox::symmetric(1, action_half_width);
    cs.lipschitz_in_action = 1.0;

    const double l_mu = graphon_mean_lipschitz(*cs.graphon, grid);
    const double c_max = state_cost.max_abs_on(grid);
    cs.constants.lipschitz = 0.0;  // b, sigma do not depend on (x, mu)
    cs.constants.growth = std::max(action_half_width, sigma0);
    // |f(x,mu) - f(x',mu')| local Holder with gamma = 1 and K from the
    // quadratic tracking term; see Assumption probes.
    cs.constants.holder = std::max(1.0, c_max) * std::max(1.0, l_mu) * 2.0;
    cs.constants.gamma = {1.0, 1.0, 1.0, 1.0};

    cs.drift = [](std::size_t, double, std::span<const double>, std::span<const double> a,
                  const EvalContext&, std::span<double> out) { out[0] = a[0]; };
    cs.volatility = [sigma0](std::size_t, double, std::span<const double>,
                             std::span<const double>, const EvalContext&,
                             std::span<double> out) { out[0] = sigma0; };
    cs.running_cost = [state_cost, grid](std::size_t u, double, std::span<const double> x,
                                         std::span<const double> a, const EvalContext& ctx) {
        const double target = ctx.neighborhood_mean(u)[0];
        const double c = state_cost(grid.label(u));
        return 0.5 * a[0] * a[0] + 0.5 * c * sq(x[0] - target);
    };
    cs.terminal_cost = nullptr;
    return cs;
}

CoefficientSet make_graphon_mean_reversion(const LabelGrid& grid,
                                           std::shared_ptr<const Graphon> graphon,
                                           const MeanReversionParams& p) {
    CoefficientSet cs;
    cs.family = "graphon-mean-reversion";
    cs.grid = grid;
    cs.graphon = std::move(graphon);
    cs.uses_neighborhood = true;
    cs.nu_independent = true;
    cs.strengthened_growth = true;
    cs.action_space = ActionBox::symmetric(1, 1.0);
    cs.lipschitz_in_action = 0.0;

    const double l_mu = graphon_mean_lipschitz(*cs.graphon, grid);
    cs.constants.lipschitz =
        std::max(p.kappa * std::max(1.0, l_mu), std::abs(p.sigma1) * l_mu);
    cs.constants.growth = std::max(p.kappa * std::max(1.0, l_mu),
                                   p.sigma0 + std::abs(p.sigma1) * l_mu);
    cs.constants.holder = std::max({1.0, p.cost_x2, p.cost_g_x2});
    cs.constants.gamma = {1.0, 1.0, 1.0, 1.0};

    const double kappa = p.kappa, s0 = p.sigma0, s1 = p.sigma1;
    cs.drift = [kappa](std::size_t u, double, std::span<const double> x, std::span<const double>,
                       const EvalContext& ctx, std::span<double> out) {
        out[0] = kappa * (ctx.neighborhood_mean(u)[0] - x[0]);
    };
    cs.volatility = [s0, s1](std::size_t u, double, std::span<const double>,
                             std::span<const double>, const EvalContext& ctx,
                             std::span<double> out) {
        out[0] = s0 + s1 * ctx.neighborhood_mean(u)[0];
    };
    if (p.cost_x2 != 0.0) {
        const double cx = p.cost_x2;
        cs.running_cost = [cx](std::size_t, double, std::span<const double> x,
                               std::span<const double>, const EvalContext&) {
            return 0.5 * cx * x[0] * x[0];
        };
    }
    if (p.cost_g_x2 != 0.0) {
        const double gx = p.cost_g_x2;
        cs.terminal_cost = [gx](std::size_t, std::span<const double> x, const EvalContext&) {
            return 0.5 * gx * x[0] * x[0];
        };
    }
    return cs;
}

CoefficientSet make_custom_polynomial(const LabelGrid& grid,
                                      std::shared_ptr<const Graphon> graphon,
                                      const PolynomialParams& p) {
    CoefficientSet cs;
    cs.family = "custom-polynomial";
    cs.grid = grid;
    cs.graphon = graphon;
    cs.uses_neighborhood =
        graphon != nullptr && (p.b_nbhd != 0.0 || p.s_nbhd != 0.0 || p.f_track != 0.0);
    cs.nu_independent = true;
    cs.action_space = ActionBox::symmetric(1, p.action_half_width);
    cs.lipschitz_in_action = std::abs(p.b_a);
    cs.strengthened_growth = (p.b_a == 0.0);

    double l_mu = 0.0;
    if (cs.uses_neighborhood) l_mu = graphon_mean_lipschitz(*graphon, grid);
    // own-label mean contributes |m_u - m_u'| <= W2(mu^u, mu'^u) <= d / sqrt(lambda_u)
    const double own_mean_lip = 1.0 / std::sqrt(grid.min_weight());
    cs.constants.lipschitz =
        std::max(std::abs(p.b_x) + std::abs(p.b_own_mean) * own_mean_lip +
                     std::abs(p.b_nbhd) * l_mu,
                 std::abs(p.s_x) + std::abs(p.s_nbhd) * l_mu);
    cs.constants.growth =
        std::max(p.b0.max_abs_on(grid) + std::abs(p.b_x) + std::abs(p.b_a) +
                     (std::abs(p.b_own_mean) * own_mean_lip + std::abs(p.b_nbhd) * l_mu),
                 p.s0.max_abs_on(grid) + std::abs(p.s_x) + std::abs(p.s_nbhd) * l_mu);
    cs.constants.holder =
        std::max({1.0, p.f_a2, p.f_x2, p.f_track * std::max(1.0, l_mu) * std::max(1.0, l_mu),
                  p.g_x2, std::abs(p.g_x)});
    cs.constants.gamma = {1.0, 1.0, 1.0, 1.0};

    const bool needs_nbhd = cs.uses_neighborhood;
    cs.drift = [p, needs_nbhd](std::size_t u, double, std::span<const double> x,
                               std::span<const double> a, const EvalContext& ctx,
                               std::span<double> out) {
        double v = p.b0(ctx.states().grid().label(u)) + p.b_x * x[0] + p.b_a * a[0];
        if (p.b_own_mean != 0.0) v += p.b_own_mean * ctx.state_mean(u)[0];
        if (needs_nbhd && p.b_nbhd != 0.0) v += p.b_nbhd * ctx.neighborhood_mean(u)[0];
        out[0] = v;
    };
    cs.volatility = [p, needs_nbhd](std::size_t u, double, std::span<const double> x,
                                    std::span<const double>, const EvalContext& ctx,
                                    std::span<double> out) {
        double v = p.s0(ctx.states().grid().label(u)) + p.s_x * x[0];
        if (needs_nbhd && p.s_nbhd != 0.0) v += p.s_nbhd * ctx.neighborhood_mean(u)[0];
        out[0] = v;
    };
    if (p.f_a2 != 0.0 || p.f_x2 != 0.0 || p.f_track != 0.0) {
        cs.running_cost = [p, needs_nbhd](std::size_t u, double, std::span<const double> x,
                                          std::span<const double> a, const EvalContext& ctx) {
            double v = 0.5 * p.f_a2 * a[0] * a[0] + 0.5 * p.f_x2 * x[0] * x[0];
            if (p.f_track != 0.0) {
                const double target = needs_nbhd ? ctx.neighborhood_mean(u)[0] : 0.0;
                v += 0.5 * p.f_track * sq(x[0] - target);
            }
            return v;
        };
    }
    if (p.g_x2 != 0.0 || p.g_x != 0.0) {
        cs.terminal_cost = [p](std::size_t, std::span<const double> x, const EvalContext&) {
            return 0.5 * p.g_x2 * x[0] * x[0] + p.g_x * x[0];
        };
    }
    return cs;
}

}  // namespace gmfc
