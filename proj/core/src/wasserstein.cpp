#include "graphon_mfc/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "graphon_mfc/numeric.hpp"

namespace gmfc {
namespace {

struct Cloud {
    std::vector<double> xs;  // n * d
    std::vector<double> ws;  // n, strictly positive, sums to 1
    std::size_t n = 0;
    std::size_t d = 0;
};

Cloud condense(const EmpiricalMeasure& m) {
    Cloud c;
    c.d = m.dim();
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double w = m.weight(i);
        if (w <= 0.0) continue;
        const auto x = m.atom(i);
        c.xs.insert(c.xs.end(), x.begin(), x.end());
        c.ws.push_back(w);
    }
    c.n = c.ws.size();
    if (c.n == 0) throw InvalidArgument("wasserstein2: measure has no mass");
    return c;
}

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += sq(a[c] - b[c]);
    return s;
}

// Exact 1-d squared cost via the monotone (quantile) coupling: both
// quantile functions are step functions, so the integral is a finite
// sweep over merged probability breakpoints.
double quantile_cost_1d(const Cloud& a, const Cloud& b) {
    std::vector<std::size_t> ia(a.n), ib(b.n);
    std::iota(ia.begin(), ia.end(), 0);
    std::iota(ib.begin(), ib.end(), 0);
    std::sort(ia.begin(), ia.end(), [&](std::size_t l, std::size_t r) { return a.xs[l] < a.xs[r]; });
    std::sort(ib.begin(), ib.end(), [&](std::size_t l, std::size_t r) { return b.xs[l] < b.xs[r]; });

    KahanSum cost;
    std::size_t pa = 0, pb = 0;
    double ra = a.ws[ia[0]], rb = b.ws[ib[0]];
    while (true) {
        const double m = std::min(ra, rb);
        cost.add(m * sq(a.xs[ia[pa]] - b.xs[ib[pb]]));
        ra -= m;  // min subtraction zeroes at least one side exactly
        rb -= m;
        if (ra <= 0.0) {
            if (++pa >= a.n) break;
            ra = a.ws[ia[pa]];
        }
        if (rb <= 0.0) {
            if (++pb >= b.n) break;
            rb = b.ws[ib[pb]];
        }
    }
    return cost.value();
}

// Transportation simplex on the dense bipartite problem
//   min sum f_ij c_ij,  sum_j f_ij = a_i,  sum_i f_ij = b_j,  f >= 0.
// Basis kept as a spanning tree over n rows + m columns; northwest
// corner start, most-negative-reduced-cost pivoting with a Bland
// fallback against degenerate cycling.
class TransportSimplex {
public:
    TransportSimplex(std::vector<double> cost, std::vector<double> a, std::vector<double> b)
        : c_(std::move(cost)), a_(std::move(a)), b_(std::move(b)),
          n_(a_.size()), m_(b_.size()),
          flow_(n_ * m_, 0.0), basic_(n_ * m_, false) {}

    double solve() {
        northwest_start();
        double max_abs_cost = 1e-300;
        for (double c : c_) max_abs_cost = std::max(max_abs_cost, std::abs(c));
        const double tol = 1e-13 * max_abs_cost;

        const std::size_t max_pivots = 400 * (n_ + m_) * (n_ + m_) + 10000;
        for (std::size_t iter = 0; iter < max_pivots; ++iter) {
            compute_potentials();
            const bool bland = iter > 40 * (n_ + m_) * (n_ + m_);
            std::size_t enter_i = n_, enter_j = m_;
            double best = -tol;
            bool found = false;
            for (std::size_t i = 0; i < n_ && !(found && bland); ++i) {
                for (std::size_t j = 0; j < m_; ++j) {
                    if (basic_[i * m_ + j]) continue;
                    const double rc = c_[i * m_ + j] - u_[i] - v_[j];
                    if (rc < best) {
                        best = rc;
                        enter_i = i;
                        enter_j = j;
                        found = true;
                        if (bland) break;
                    }
                }
            }
            if (!found) break;
            pivot(enter_i, enter_j);
        }
        KahanSum total;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < m_; ++j) {
                if (flow_[i * m_ + j] > 0.0) total.add(flow_[i * m_ + j] * c_[i * m_ + j]);
            }
        }
        return total.value();
    }

private:
    void northwest_start() {
        std::vector<double> ra = a_, rb = b_;
        std::size_t i = 0, j = 0;
        std::size_t basics = 0;
        while (basics < n_ + m_ - 1) {
            const double f = std::min(ra[i], rb[j]);
            flow_[i * m_ + j] = f;
            basic_[i * m_ + j] = true;
            ++basics;
            ra[i] -= f;
            rb[j] -= f;
            const bool row_done = ra[i] <= rb[j];
            if (row_done && i + 1 < n_) {
                ++i;
            } else if (j + 1 < m_) {
                ++j;
            } else if (i + 1 < n_) {
                ++i;
            } else {
                break;
            }
        }
    }

    void compute_potentials() {
        u_.assign(n_, 0.0);
        v_.assign(m_, 0.0);
        std::vector<char> known_u(n_, 0), known_v(m_, 0);
        std::vector<std::size_t> stack;
        known_u[0] = 1;
        stack.push_back(0);  // row nodes are [0,n), column nodes are [n, n+m)
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node < n_) {
                const std::size_t i = node;
                for (std::size_t j = 0; j < m_; ++j) {
                    if (basic_[i * m_ + j] && !known_v[j]) {
                        v_[j] = c_[i * m_ + j] - u_[i];
                        known_v[j] = 1;
                        stack.push_back(n_ + j);
                    }
                }
            } else {
                const std::size_t j = node - n_;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (basic_[i * m_ + j] && !known_u[i]) {
                        u_[i] = c_[i * m_ + j] - v_[j];
                        known_u[i] = 1;
                        stack.push_back(i);
                    }
                }
            }
        }
    }

    // Unique tree path row(enter_i) -> col(enter_j); the closed cycle
    // alternates +/- starting from the entering arc.
    void pivot(std::size_t enter_i, std::size_t enter_j) {
        const std::size_t nodes = n_ + m_;
        std::vector<std::ptrdiff_t> parent(nodes, -1);
        std::vector<char> seen(nodes, 0);
        std::vector<std::size_t> queue;
        queue.push_back(enter_i);
        seen[enter_i] = 1;
        for (std::size_t q = 0; q < queue.size(); ++q) {
            const std::size_t node = queue[q];
            if (node == n_ + enter_j) break;
            if (node < n_) {
                const std::size_t i = node;
                for (std::size_t j = 0; j < m_; ++j) {
                    if (basic_[i * m_ + j] && !seen[n_ + j]) {
                        seen[n_ + j] = 1;
                        parent[n_ + j] = static_cast<std::ptrdiff_t>(node);
                        queue.push_back(n_ + j);
                    }
                }
            } else {
                const std::size_t j = node - n_;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (basic_[i * m_ + j] && !seen[i]) {
                        seen[i] = 1;
                        parent[i] = static_cast<std::ptrdiff_t>(node);
                        queue.push_back(i);
                    }
                }
            }
        }
        std::vector<std::size_t> path;  // nodes from enter_i to col(enter_j)
        for (std::ptrdiff_t node = static_cast<std::ptrdiff_t>(n_ + enter_j); node != -1;
             node = parent[node]) {
            path.push_back(static_cast<std::size_t>(node));
        }
        std::reverse(path.begin(), path.end());

        // Arcs along the path; the arc closest to enter_j leaves first
        // candidate set with sign -1, alternating backwards.
        struct CycleArc {
            std::size_t i, j;
            int sign;
        };
        std::vector<CycleArc> arcs;
        const std::size_t arc_count = path.size() - 1;
        for (std::size_t k = 0; k < arc_count; ++k) {
            const std::size_t x = path[k], y = path[k + 1];
            const std::size_t i = std::min(x, y);
            const std::size_t j = std::max(x, y) - n_;
            const int sign = ((arc_count - 1 - k) % 2 == 0) ? -1 : +1;
            arcs.push_back({i, j, sign});
        }

        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave_i = enter_i, leave_j = enter_j;
        for (const auto& arc : arcs) {
            if (arc.sign < 0) {
                const double f = flow_[arc.i * m_ + arc.j];
                if (f < theta ||
                    (f == theta && (arc.i < leave_i || (arc.i == leave_i && arc.j < leave_j)))) {
                    theta = f;
                    leave_i = arc.i;
                    leave_j = arc.j;
                }
            }
        }
        flow_[enter_i * m_ + enter_j] += theta;
        for (const auto& arc : arcs) {
            flow_[arc.i * m_ + arc.j] += arc.sign * theta;
        }
        flow_[leave_i * m_ + leave_j] = 0.0;
        basic_[leave_i * m_ + leave_j] = false;
        basic_[enter_i * m_ + enter_j] = true;
    }

    std::vector<double> c_;
    std::vector<double> a_, b_;
    std::size_t n_, m_;
    std::vector<double> flow_;
    std::vector<char> basic_;
    std::vector<double> u_, v_;
};

double data_scale(const Cloud& a, const Cloud& b) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double x : a.xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    for (double x : b.xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return std::max(hi - lo, 1e-9);
}

double logsumexp(std::span<const double> xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    KahanSum s;
    for (double x : xs) s.add(std::exp(x - mx));
    return mx + std::log(s.value());
}

double sinkhorn_plan_cost(const Cloud& a, const Cloud& b, double eps_target,
                          std::size_t max_iters, double marginal_tol,
                          std::size_t* iters_out) {
    const std::size_t n = a.n, m = b.n, d = a.d;
    std::vector<double> cost(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            cost[i * m + j] = sq_dist(&a.xs[i * d], &b.xs[j * d], d);
        }
    }
    std::vector<double> log_a(n), log_b(m);
    for (std::size_t i = 0; i < n; ++i) log_a[i] = std::log(a.ws[i]);
    for (std::size_t j = 0; j < m; ++j) log_b[j] = std::log(b.ws[j]);

    std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));
    const double scale2 = sq(data_scale(a, b));
    double eps = std::max(eps_target, 0.05 * scale2);
    std::size_t total_iters = 0;

    while (true) {
        for (std::size_t it = 0; it < max_iters; ++it) {
            ++total_iters;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) {
                    buf[j] = (g[j] - cost[i * m + j]) / eps + log_b[j];
                }
                f[i] = -eps * logsumexp({buf.data(), m});
            }
            double violation = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                for (std::size_t i = 0; i < n; ++i) {
                    buf[i] = (f[i] - cost[i * m + j]) / eps + log_a[i];
                }
                const double new_g = -eps * logsumexp({buf.data(), n});
                violation = std::max(violation, std::abs(new_g - g[j]) / eps);
                g[j] = new_g;
            }
            if (violation < marginal_tol || total_iters >= max_iters) break;
        }
        if (eps <= eps_target || total_iters >= max_iters) break;
        eps = std::max(eps_target, eps * 0.25);
    }
    if (iters_out) *iters_out = total_iters;

    KahanSum total;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double lp = (f[i] + g[j] - cost[i * m + j]) / eps + log_a[i] + log_b[j];
            total.add(std::exp(lp) * cost[i * m + j]);
        }
    }
    return total.value();
}

}  // namespace

namespace detail {

double transport_simplex_cost(const EmpiricalMeasure& am, const EmpiricalMeasure& bm) {
    const Cloud a = condense(am), b = condense(bm);
    const std::size_t d = a.d;
    std::vector<double> cost(a.n * b.n);
    for (std::size_t i = 0; i < a.n; ++i) {
        for (std::size_t j = 0; j < b.n; ++j) {
            cost[i * b.n + j] = sq_dist(&a.xs[i * d], &b.xs[j * d], d);
        }
    }
    TransportSimplex lp(std::move(cost), a.ws, b.ws);
    return lp.solve();
}

double sinkhorn_cost(const EmpiricalMeasure& am, const EmpiricalMeasure& bm, double eps,
                     std::size_t max_iters, double marginal_tol, std::size_t* iters_out) {
    const Cloud a = condense(am), b = condense(bm);
    return sinkhorn_plan_cost(a, b, eps, max_iters, marginal_tol, iters_out);
}

}  // namespace detail

double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                    const TransportOptions& opts, TransportInfo* info) {
    if (a.dim() != b.dim()) throw InvalidArgument("wasserstein2: dimension mismatch");
    if (a.size() == 0 || b.size() == 0) throw InvalidArgument("wasserstein2: empty measure");
    const Cloud ca = condense(a), cb = condense(b);
    if (a.dim() == 1) {
        if (info) *info = {"quantile", 0.0, 0};
        return std::sqrt(std::max(0.0, quantile_cost_1d(ca, cb)));
    }
    if (std::max(ca.n, cb.n) <= opts.exact_cap) {
        if (info) *info = {"simplex", 0.0, 0};
        return std::sqrt(std::max(0.0, detail::transport_simplex_cost(a, b)));
    }
    const double eps = opts.entropic_eps_factor * sq(data_scale(ca, cb));
    std::size_t iters = 0;
    const double cost = sinkhorn_plan_cost(ca, cb, eps, opts.sinkhorn_max_iters,
                                           opts.sinkhorn_marginal_tol, &iters);
    if (info) {
        const double band =
            eps * (1.0 + std::log(static_cast<double>(ca.n) * static_cast<double>(cb.n)));
        *info = {"sinkhorn", band, iters};
    }
    return std::sqrt(std::max(0.0, cost));
}

double collection_distance(const MeasureCollection& mu, const MeasureCollection& nu,
                           const TransportOptions& opts) {
    if (!(mu.grid() == nu.grid())) throw InvalidArgument("collection_distance: grid mismatch");
    const std::size_t k_count = mu.size();
    std::vector<double> per_label(k_count);
#pragma omp parallel for schedule(dynamic)
    for (long long k = 0; k < static_cast<long long>(k_count); ++k) {
        per_label[k] = wasserstein2(mu.measure(k), nu.measure(k), opts);
    }
    KahanSum acc;
    for (std::size_t k = 0; k < k_count; ++k) {
        acc.add(mu.grid().weight(k) * sq(per_label[k]));
    }
    return std::sqrt(std::max(0.0, acc.value()));
}

}  // namespace gmfc
