#include "graphon_mfc/lq.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "graphon_mfc/numeric.hpp"

namespace gmfc {

struct LQBenchmark::Shared {
    std::size_t k = 0;
    std::size_t nodes = 0;
    double node_dt = 0.0;
    double horizon = 0.0;
    std::vector<double> lambda;      // grid weights
    std::vector<double> cost_c;      // c(u_k)
    double sigma0 = 0.0;
    // node-major trajectories and their time derivatives
    std::vector<double> p_mat, dp_mat;  // nodes * k * k
    std::vector<double> p_fl, dp_fl;    // nodes * k
    std::vector<double> r_off, dr_off;  // nodes * k

    std::span<const double> mat(std::size_t i) const {
        return {p_mat.data() + i * k * k, k * k};
    }
    std::span<const double> dmat(std::size_t i) const {
        return {dp_mat.data() + i * k * k, k * k};
    }

    // cubic Hermite between nodes
    void interp(const std::vector<double>& vals, const std::vector<double>& ders,
                std::size_t block, double t, std::span<double> out) const {
        double tt = std::clamp(t, 0.0, horizon);
        std::size_t j = static_cast<std::size_t>(tt / node_dt);
        j = std::min(j, nodes - 2);
        const double s = (tt - static_cast<double>(j) * node_dt) / node_dt;
        const double h00 = (1.0 + 2.0 * s) * sq(1.0 - s);
        const double h10 = s * sq(1.0 - s);
        const double h01 = s * s * (3.0 - 2.0 * s);
        const double h11 = s * s * (s - 1.0);
        const double* v0 = vals.data() + j * block;
        const double* v1 = vals.data() + (j + 1) * block;
        const double* d0 = ders.data() + j * block;
        const double* d1 = ders.data() + (j + 1) * block;
        for (std::size_t c = 0; c < block; ++c) {
            out[c] = h00 * v0[c] + h10 * node_dt * d0[c] + h01 * v1[c] + h11 * node_dt * d1[c];
        }
    }

    // exact time derivatives through the ODE right-hand sides
    void mean_riccati_dt(std::span<const double> p, std::span<double> out) const {
        // dP/dt = P R^{-1} P - Q with R = diag(lambda)
        Eigen::Map<const Eigen::MatrixXd> pm(p.data(), k, k);
        Eigen::MatrixXd rinv_p = pm;
        for (std::size_t r = 0; r < k; ++r) rinv_p.row(r) /= lambda[r];
        Eigen::MatrixXd dp = pm * rinv_p - q_matrix();
        Eigen::Map<Eigen::MatrixXd>(out.data(), k, k) = dp;
    }
    Eigen::MatrixXd q_matrix() const {
        Eigen::Map<const Eigen::MatrixXd> q(q_mat.data(), k, k);
        return q;
    }
    std::vector<double> q_mat;  // (I - W)' diag(lambda c) (I - W)
};

namespace {

struct LQFeedbackCore {
    std::shared_ptr<const LQBenchmark::Shared> shared;
    double shift = 0.0;
    double lo = 0.0, hi = 0.0;

    void operator()(std::size_t u, double t, std::size_t, std::span<const double> x,
                    const EvalContext& ctx, std::span<double> out) const;
};

}  // namespace

struct LQInterpCache {
    double t = std::numeric_limits<double>::quiet_NaN();
    const void* owner = nullptr;
    std::vector<double> p_mat, p_fl;
};

namespace {

void interp_cached(const LQBenchmark::Shared& sh, double t, LQInterpCache& cache) {
    if (cache.owner == &sh && cache.t == t) return;
    cache.owner = &sh;
    cache.t = t;
    cache.p_mat.resize(sh.k * sh.k);
    cache.p_fl.resize(sh.k);
    sh.interp(sh.p_mat, sh.dp_mat, sh.k * sh.k, t, cache.p_mat);
    sh.interp(sh.p_fl, sh.dp_fl, sh.k, t, cache.p_fl);
}

void LQFeedbackCore::operator()(std::size_t u, double t, std::size_t, std::span<const double> x,
                                const EvalContext& ctx, std::span<double> out) const {
    static thread_local LQInterpCache cache;
    interp_cached(*shared, t, cache);
    const std::size_t k = shared->k;
    // (P m)_u with m the per-label means of the current collection
    double pm_u = 0.0;
    for (std::size_t v = 0; v < k; ++v) {
        pm_u += cache.p_mat[u * k + v] * ctx.state_mean(v)[0];
    }
    const double mean_u = ctx.state_mean(u)[0];
    double a = -pm_u / shared->lambda[u] - cache.p_fl[u] * (x[0] - mean_u) + shift;
    out[0] = std::clamp(a, lo, hi);
}

class LQEvaluation : public CandidateEvaluation {
public:
    LQEvaluation(std::shared_ptr<const LQBenchmark::Shared> shared, double t,
                 const MeasureView& mu)
        : shared_(std::move(shared)), mu_(&mu), t_(t) {
        const std::size_t k = shared_->k;
        p_mat_.resize(k * k);
        p_fl_.resize(k);
        r_off_.resize(k);
        shared_->interp(shared_->p_mat, shared_->dp_mat, k * k, t, p_mat_);
        shared_->interp(shared_->p_fl, shared_->dp_fl, k, t, p_fl_);
        shared_->interp(shared_->r_off, shared_->dr_off, k, t, r_off_);
        means_.resize(k);
        vars_.resize(k);
        for (std::size_t v = 0; v < k; ++v) {
            means_[v] = mu.mean(v)[0];
            vars_[v] = std::max(0.0, mu.second_total(v) - sq(means_[v]));
        }
        pm_.assign(k, 0.0);
        for (std::size_t r = 0; r < k; ++r) {
            KahanSum acc;
            for (std::size_t c = 0; c < k; ++c) acc.add(p_mat_[r * k + c] * means_[c]);
            pm_[r] = acc.value();
        }
    }

    double value() const override {
        const std::size_t k = shared_->k;
        KahanSum acc;
        for (std::size_t r = 0; r < k; ++r) acc.add(0.5 * means_[r] * pm_[r]);
        for (std::size_t r = 0; r < k; ++r) {
            acc.add(shared_->lambda[r] * (0.5 * p_fl_[r] * vars_[r] + r_off_[r]));
        }
        return acc.value();
    }

    double partial_t() const override {
        const std::size_t k = shared_->k;
        std::vector<double> dp(k * k);
        shared_->mean_riccati_dt(p_mat_, dp);
        KahanSum acc;
        for (std::size_t r = 0; r < k; ++r) {
            KahanSum row;
            for (std::size_t c = 0; c < k; ++c) row.add(dp[r * k + c] * means_[c]);
            acc.add(0.5 * means_[r] * row.value());
        }
        for (std::size_t r = 0; r < k; ++r) {
            const double dpf = sq(p_fl_[r]) - shared_->cost_c[r];       // dp/dt = p^2 - c
            const double drf = -0.5 * sq(shared_->sigma0) * p_fl_[r];   // dr/dt
            acc.add(shared_->lambda[r] * (0.5 * dpf * vars_[r] + drf));
        }
        return acc.value();
    }

    double flat(std::size_t u, std::span<const double> x) const override {
        return pm_[u] * x[0] / shared_->lambda[u] +
               0.5 * p_fl_[u] * (x[0] * x[0] - 2.0 * means_[u] * x[0]);
    }

    void grad(std::size_t u, std::span<const double> x, std::span<double> out) const override {
        out[0] = pm_[u] / shared_->lambda[u] + p_fl_[u] * (x[0] - means_[u]);
    }

    void hess(std::size_t u, std::span<const double>, std::span<double> out) const override {
        out[0] = p_fl_[u];
    }

private:
    std::shared_ptr<const LQBenchmark::Shared> shared_;
    const MeasureView* mu_;
    double t_;
    std::vector<double> p_mat_, p_fl_, r_off_, means_, vars_, pm_;
};

}  // namespace

std::span<const double> LQBenchmark::mean_riccati_node(std::size_t i) const {
    return shared_->mat(i);
}
std::span<const double> LQBenchmark::fluct_riccati_node(std::size_t i) const {
    return {shared_->p_fl.data() + i * shared_->k, shared_->k};
}
std::span<const double> LQBenchmark::offset_node(std::size_t i) const {
    return {shared_->r_off.data() + i * shared_->k, shared_->k};
}

void LQBenchmark::mean_riccati(double t, std::span<double> out) const {
    shared_->interp(shared_->p_mat, shared_->dp_mat, shared_->k * shared_->k, t, out);
}
void LQBenchmark::fluct_riccati(double t, std::span<double> out) const {
    shared_->interp(shared_->p_fl, shared_->dp_fl, shared_->k, t, out);
}
void LQBenchmark::offset(double t, std::span<double> out) const {
    shared_->interp(shared_->r_off, shared_->dr_off, shared_->k, t, out);
}

double LQBenchmark::value_from_moments(double t, std::span<const double> means,
                                       std::span<const double> variances) const {
    const std::size_t k = shared_->k;
    std::vector<double> p(k * k), pf(k), ro(k);
    mean_riccati(t, p);
    fluct_riccati(t, pf);
    offset(t, ro);
    KahanSum acc;
    for (std::size_t r = 0; r < k; ++r) {
        KahanSum row;
        for (std::size_t c = 0; c < k; ++c) row.add(p[r * k + c] * means[c]);
        acc.add(0.5 * means[r] * row.value());
        acc.add(shared_->lambda[r] * (0.5 * pf[r] * variances[r] + ro[r]));
    }
    return acc.value();
}

std::unique_ptr<CandidateEvaluation> LQBenchmark::at(double t, const MeasureView& mu) const {
    if (mu.dim() != 1) throw InvalidArgument("LQBenchmark: scalar states only");
    return std::make_unique<LQEvaluation>(shared_, t, mu);
}

Policy LQBenchmark::oracle_feedback() const {
    LQFeedbackCore core{shared_, 0.0, -params_.action_half_width, params_.action_half_width};
    double p_max = 0.0;
    for (std::size_t i = 0; i < nodes_; ++i) {
        for (double p : fluct_riccati_node(i)) p_max = std::max(p_max, std::abs(p));
    }
    return Policy::markov(
        [core](std::size_t u, double t, std::size_t step, std::span<const double> x,
               const EvalContext& ctx, std::span<double> out) {
            core(u, t, step, x, ctx, out);
        },
        p_max);
}

Policy LQBenchmark::perturbed_feedback(double shift) const {
    Policy base = oracle_feedback();
    LQFeedbackCore core{shared_, shift, -params_.action_half_width, params_.action_half_width};
    return Policy::markov(
        [core](std::size_t u, double t, std::size_t step, std::span<const double> x,
               const EvalContext& ctx, std::span<double> out) {
            core(u, t, step, x, ctx, out);
        },
        base.lipschitz_in_x());
}

std::shared_ptr<LQBenchmark> build_lq_benchmark(const LQParams& params) {
    const std::size_t k = params.grid.size();
    if (!params.graphon || params.graphon->size() != k) {
        throw InvalidArgument("build_lq_benchmark: graphon missing or grid mismatch");
    }
    if (!(params.horizon > 0.0)) throw InvalidArgument("build_lq_benchmark: horizon > 0");
    if (params.sigma0 < 0.0) throw InvalidArgument("build_lq_benchmark: sigma0 >= 0");
    if (params.ode_nodes < 9) throw InvalidArgument("build_lq_benchmark: need >= 9 ode nodes");
    if (k > 64) throw InvalidArgument("build_lq_benchmark: label grid too large (<= 64)");

    auto bench = std::make_shared<LQBenchmark>();
    bench->params_ = params;
    bench->coeffs_ = make_graphon_lq(params.grid, params.graphon, params.state_cost,
                                     params.sigma0, params.action_half_width);

    auto shared = std::make_shared<LQBenchmark::Shared>();
    shared->k = k;
    shared->nodes = params.ode_nodes;
    shared->horizon = params.horizon;
    shared->node_dt = params.horizon / static_cast<double>(params.ode_nodes - 1);
    shared->lambda = params.grid.weights();
    shared->sigma0 = params.sigma0;
    shared->cost_c.resize(k);
    for (std::size_t r = 0; r < k; ++r) {
        shared->cost_c[r] = params.state_cost(params.grid.label(r));
        if (shared->cost_c[r] < 0.0) {
            throw InvalidArgument("build_lq_benchmark: state cost must be >= 0");
        }
    }

    // Q = (I - W)' diag(lambda c) (I - W)
    Eigen::MatrixXd w(k, k);
    for (std::size_t r = 0; r < k; ++r) {
        const auto mix = params.graphon->mixture_weights(r);
        for (std::size_t c = 0; c < k; ++c) w(r, c) = mix[c];
    }
    Eigen::MatrixXd iw = Eigen::MatrixXd::Identity(k, k) - w;
    Eigen::VectorXd lc(k);
    for (std::size_t r = 0; r < k; ++r) lc(r) = shared->lambda[r] * shared->cost_c[r];
    Eigen::MatrixXd q = iw.transpose() * lc.asDiagonal() * iw;
    shared->q_mat.assign(q.data(), q.data() + k * k);

    // backward integration in tau = horizon - t:
    //   dP/dtau = Q - P R^{-1} P,  dp/dtau = c - p^2,  dr/dtau = sigma0^2 p / 2
    const std::size_t nodes = shared->nodes;
    const double h = shared->node_dt;
    shared->p_mat.assign(nodes * k * k, 0.0);
    shared->p_fl.assign(nodes * k, 0.0);
    shared->r_off.assign(nodes * k, 0.0);

    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd pf = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd ro = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd inv_lambda(k);
    for (std::size_t r = 0; r < k; ++r) inv_lambda(r) = 1.0 / shared->lambda[r];
    Eigen::VectorXd cvec(k);
    for (std::size_t r = 0; r < k; ++r) cvec(r) = shared->cost_c[r];

    const auto rhs_mat = [&](const Eigen::MatrixXd& pm) -> Eigen::MatrixXd {
        return q - pm * inv_lambda.asDiagonal() * pm;
    };
    const auto rhs_fl = [&](const Eigen::VectorXd& pv) -> Eigen::VectorXd {
        return cvec - pv.array().square().matrix();
    };
    const auto rhs_off = [&](const Eigen::VectorXd& pv) -> Eigen::VectorXd {
        return 0.5 * sq(params.sigma0) * pv;
    };

    const auto store = [&](std::size_t tau_index) {
        const std::size_t t_index = nodes - 1 - tau_index;  // ascending in t
        Eigen::Map<Eigen::MatrixXd>(shared->p_mat.data() + t_index * k * k, k, k) = p;
        Eigen::Map<Eigen::VectorXd>(shared->p_fl.data() + t_index * k, k) = pf;
        Eigen::Map<Eigen::VectorXd>(shared->r_off.data() + t_index * k, k) = ro;
    };
    store(0);
    for (std::size_t i = 1; i < nodes; ++i) {
        const Eigen::MatrixXd k1 = rhs_mat(p);
        const Eigen::VectorXd k1f = rhs_fl(pf);
        const Eigen::VectorXd k1r = rhs_off(pf);
        const Eigen::MatrixXd k2 = rhs_mat(p + 0.5 * h * k1);
        const Eigen::VectorXd k2f = rhs_fl(pf + 0.5 * h * k1f);
        const Eigen::VectorXd k2r = rhs_off(pf + 0.5 * h * k1f);
        const Eigen::MatrixXd k3 = rhs_mat(p + 0.5 * h * k2);
        const Eigen::VectorXd k3f = rhs_fl(pf + 0.5 * h * k2f);
        const Eigen::VectorXd k3r = rhs_off(pf + 0.5 * h * k2f);
        const Eigen::MatrixXd k4 = rhs_mat(p + h * k3);
        const Eigen::VectorXd k4f = rhs_fl(pf + h * k3f);
        const Eigen::VectorXd k4r = rhs_off(pf + h * k3f);
        p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        pf += (h / 6.0) * (k1f + 2.0 * k2f + 2.0 * k3f + k4f);
        ro += (h / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        store(i);
    }

    // derivatives in t (for Hermite interpolation) from the ODE rhs
    shared->dp_mat.assign(nodes * k * k, 0.0);
    shared->dp_fl.assign(nodes * k, 0.0);
    shared->dr_off.assign(nodes * k, 0.0);
    for (std::size_t i = 0; i < nodes; ++i) {
        shared->mean_riccati_dt(shared->mat(i),
                                {shared->dp_mat.data() + i * k * k, k * k});
        for (std::size_t r = 0; r < k; ++r) {
            const double pv = shared->p_fl[i * k + r];
            shared->dp_fl[i * k + r] = sq(pv) - shared->cost_c[r];
            shared->dr_off[i * k + r] = -0.5 * sq(params.sigma0) * pv;
        }
    }

    // five-point-stencil defect of the stored trajectories
    double worst = 0.0;
    const auto stencil = [&](const std::vector<double>& vals, const std::vector<double>& ders,
                             std::size_t block) {
        for (std::size_t i = 2; i + 2 < nodes; ++i) {
            for (std::size_t c = 0; c < block; ++c) {
                const double num = vals[(i - 2) * block + c] - 8.0 * vals[(i - 1) * block + c] +
                                   8.0 * vals[(i + 1) * block + c] - vals[(i + 2) * block + c];
                const double diff = num / (12.0 * h);
                worst = std::max(worst, std::abs(diff - ders[i * block + c]));
            }
        }
    };
    stencil(shared->p_mat, shared->dp_mat, k * k);
    stencil(shared->p_fl, shared->dp_fl, k);
    stencil(shared->r_off, shared->dr_off, k);

    bench->shared_ = shared;
    bench->nodes_ = nodes;
    bench->node_dt_ = shared->node_dt;
    bench->max_ode_residual_ = worst;
    if (!(worst < 1e-8)) {
        throw NumericalFailure("build_lq_benchmark: Riccati trajectories fail the 1e-8 defect bound");
    }
    return bench;
}

}  // namespace gmfc
