#pragma once

// Temporal causal structure learning over the trajectories T_k = U_k S_k:
// per-slice ridge solves, consensus aggregation of W under the acyclicity
// penalty and l1 prox, soft-thresholded averaging for A, and dual/penalty
// schedules.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "carted/graph_utils.hpp"
#include "carted/linalg.hpp"
#include "carted/parallel.hpp"
#include "carted/tensor.hpp"

namespace carted {

struct CausalOptions {
    double lambda_w = 0.5;
    double lambda_a = 0.5;
    double rho1 = 1.0;
    double rho2 = 1.0;
    double phi1 = 1.6;
    // Growing rho2 at the same rate as rho1 keeps rho1 / (K rho2) fixed in
    // the global W problem, and h(W) then decays only like 1 / t. It also
    // leaves the scaled duals beta, gamma stale after every change of rho2.
    double phi2 = 1.0;
    int max_outer = 100;
    double h_tol = 1e-8;
    double rho_cap = 1e16;

    // proximal gradient for the global W problem
    int prox_max_iter = 1000;
    double prox_tol = 1e-12;
    double armijo = 1e-4;
    int max_halvings = 50;
};

/// Local copies, duals and penalty schedule of the consensus ADMM.
struct CausalAdmmState {
    std::vector<Matrix> W_tilde;  // R x R
    std::vector<Matrix> A_tilde;  // (P R) x R, stacked lags
    std::vector<Matrix> beta;
    std::vector<Matrix> gamma;
    double alpha = 0.0;
    double rho1 = 1.0;
    double rho2 = 1.0;
    double phi1 = 1.6;
    // Growing rho2 at the same rate as rho1 keeps rho1 / (K rho2) fixed in
    // the global W problem, and h(W) then decays only like 1 / t. It also
    // leaves the scaled duals beta, gamma stale after every change of rho2.
    double phi2 = 1.0;

    static CausalAdmmState init(std::size_t slices, const CausalGraph& g, const CausalOptions& opt) {
        CausalAdmmState st;
        const Matrix a = g.stacked_A();
        st.W_tilde.assign(slices, g.W);
        st.A_tilde.assign(slices, a);
        st.beta.assign(slices, Matrix::Zero(g.W.rows(), g.W.cols()));
        st.gamma.assign(slices, Matrix::Zero(a.rows(), a.cols()));
        st.rho1 = opt.rho1;
        st.rho2 = opt.rho2;
        st.phi1 = opt.phi1;
        st.phi2 = opt.phi2;
        return st;
    }
};

/// Z_k = [T | M_1 T | ... | M_P T]
inline Matrix lagged_design(const Matrix& t, Index lags) {
    const Index r = t.cols();
    Matrix z(t.rows(), (lags + 1) * r);
    z.leftCols(r) = t;
    for (Index p = 1; p <= lags; ++p) z.middleCols(p * r, r) = ShiftOperator(p, t.rows()).apply(t);
    return z;
}

struct LocalSolution {
    Matrix W_tilde;
    Matrix A_tilde;  // stacked
};

/// Joint ridge solve of the per-slice SVAR least squares
///   (1 / 2 I_k) ||T - T W~ - sum_p M_p T A~_p||^2
///     + (rho2 / 2) ||W~ - W + beta||^2 + (rho2 / 2) ||A~ - A + gamma||^2.
/// The diagonal of W~ is held at zero: a node never regresses on itself
/// within the same time step.
inline LocalSolution local_update(const Matrix& t, const Matrix& w, const Matrix& a_stacked, const Matrix& beta,
                                  const Matrix& gamma, double rho2, Index lags) {
    const Index r = t.cols();
    const Index n = t.rows();
    detail::require_arg(n > lags, "local_update: slice has " + std::to_string(n) + " visits, lag order is " +
                                      std::to_string(lags));
    detail::require_dims(w.rows() == r && w.cols() == r, "local_update: W shape mismatch");
    detail::require_dims(a_stacked.rows() == lags * r && a_stacked.cols() == r, "local_update: A shape mismatch");
    detail::require_arg(rho2 >= 0.0, "local_update: rho2 must be non-negative");

    const Matrix z = lagged_design(t, lags);
    const double inv_n = 1.0 / static_cast<double>(n);
    const Matrix gram = z.transpose() * z * inv_n;
    const Matrix cross = z.transpose() * t * inv_n;
    Matrix prior(z.cols(), r);
    prior.topRows(r) = w - beta;
    if (lags > 0) prior.bottomRows(lags * r) = a_stacked - gamma;

    const Index m = z.cols();
    Matrix coef = Matrix::Zero(m, r);
    for (Index j = 0; j < r; ++j) {
        // all regressors except T_j itself
        std::vector<Index> keep;
        keep.reserve(static_cast<std::size_t>(m - 1));
        for (Index i = 0; i < m; ++i)
            if (i != j) keep.push_back(i);
        const Index q = static_cast<Index>(keep.size());
        if (q == 0) continue;
        Matrix lhs(q, q);
        Vector rhs(q);
        for (Index a = 0; a < q; ++a) {
            rhs(a) = cross(keep[a], j) + rho2 * prior(keep[a], j);
            for (Index b = 0; b < q; ++b) lhs(a, b) = gram(keep[a], keep[b]);
            lhs(a, a) += rho2;
        }
        const Vector sol = SymmetricSolver(lhs).solve(rhs);
        for (Index a = 0; a < q; ++a) coef(keep[a], j) = sol(a);
    }
    return LocalSolution{coef.topRows(r), coef.bottomRows(lags * r)};
}

/// A = soft(mean_k(A~_k + gamma_k), lambda_A / (K rho2)).
inline Matrix global_A_update(const std::vector<Matrix>& a_tilde, const std::vector<Matrix>& gamma, double rho2,
                              double lambda_a) {
    detail::require_arg(!a_tilde.empty(), "global_A_update: no slices");
    detail::require_dims(a_tilde.size() == gamma.size(), "global_A_update: list lengths differ");
    detail::require_arg(rho2 > 0.0, "global_A_update: rho2 must be positive");
    Matrix mean = Matrix::Zero(a_tilde.front().rows(), a_tilde.front().cols());
    for (std::size_t k = 0; k < a_tilde.size(); ++k) mean += a_tilde[k] + gamma[k];
    const double kk = static_cast<double>(a_tilde.size());
    mean /= kk;
    return soft_threshold(mean, lambda_a / (kk * rho2));
}

struct GlobalWResult {
    Matrix W;
    double objective = 0.0;
    double initial_objective = 0.0;
    int iterations = 0;
    bool line_search_failed = false;
};

/// sum_k (rho2/2)||W~_k - W + beta_k||^2 + (rho1/2)(h(W) + alpha)^2 + lambda_W ||W||_1
inline double global_W_objective(const Matrix& w, const std::vector<Matrix>& w_tilde,
                                 const std::vector<Matrix>& beta, double alpha, double rho1, double rho2,
                                 double lambda_w) {
    double quad = 0.0;
    for (std::size_t k = 0; k < w_tilde.size(); ++k) quad += (w_tilde[k] - w + beta[k]).squaredNorm();
    const double h = h_acyclicity(w);
    return 0.5 * rho2 * quad + 0.5 * rho1 * (h + alpha) * (h + alpha) + lambda_w * w.cwiseAbs().sum();
}

/// Proximal gradient with backtracking on the global W problem, diagonal held
/// at zero (the starting point is w_init with its diagonal cleared). The objective is divided by K rho2 so that the quadratic part has
/// unit curvature and the initial step of 1.0 is exact for it.
inline GlobalWResult global_W_update(const std::vector<Matrix>& w_tilde, const std::vector<Matrix>& beta, double alpha,
                                     double rho1, double rho2, double lambda_w, const Matrix& w_init,
                                     const CausalOptions& opt = {}) {
    detail::require_arg(!w_tilde.empty(), "global_W_update: no slices");
    detail::require_dims(w_tilde.size() == beta.size(), "global_W_update: list lengths differ");
    detail::require_arg(rho2 > 0.0 && rho1 >= 0.0 && lambda_w >= 0.0, "global_W_update: invalid penalties");
    const Index d = w_init.rows();
    const double kk = static_cast<double>(w_tilde.size());
    const double scale = kk * rho2;

    Matrix center = Matrix::Zero(d, d);
    for (std::size_t k = 0; k < w_tilde.size(); ++k) center += w_tilde[k] + beta[k];
    center /= kk;

    const double c_h = rho1 / scale;
    const double c_l1 = lambda_w / scale;
    // F / (K rho2) up to an additive constant
    auto smooth = [&](const Matrix& w, Matrix* grad) {
        if (grad) {
            auto [h, gh] = h_and_grad(w);
            *grad = (w - center) + c_h * (h + alpha) * gh;
            return 0.5 * (w - center).squaredNorm() + 0.5 * c_h * (h + alpha) * (h + alpha);
        }
        const double h = h_acyclicity(w);
        return 0.5 * (w - center).squaredNorm() + 0.5 * c_h * (h + alpha) * (h + alpha);
    };
    auto full = [&](const Matrix& w) { return smooth(w, nullptr) + c_l1 * w.cwiseAbs().sum(); };
    auto prox = [&](const Matrix& v, double step) {
        Matrix out = soft_threshold(v, step * c_l1);
        out.diagonal().setZero();
        return out;
    };

    GlobalWResult res;
    Matrix w = w_init;
    w.diagonal().setZero();
    res.initial_objective = global_W_objective(w, w_tilde, beta, alpha, rho1, rho2, lambda_w);
    double fw = full(w);
    Matrix best = w;
    double f_best = fw;

    Matrix grad;
    for (int it = 0; it < opt.prox_max_iter; ++it) {
        smooth(w, &grad);
        double step = 1.0;
        bool accepted = false;
        Matrix next;
        double f_next = 0.0;
        for (int halving = 0; halving <= opt.max_halvings; ++halving) {
            next = prox(w - step * grad, step);
            f_next = full(next);
            const double move = (next - w).squaredNorm();
            if (std::isfinite(f_next) && f_next <= fw - opt.armijo / step * move) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++res.iterations;
        if (!accepted) {
            res.line_search_failed = (next - w).norm() > opt.prox_tol * (1.0 + w.norm());
            break;
        }
        const double move = (next - w).norm();
        const double drop = fw - f_next;
        w = std::move(next);
        fw = f_next;
        if (fw < f_best) {
            best = w;
            f_best = fw;
        }
        if (move <= opt.prox_tol * (1.0 + w.norm()) || drop <= 1e-15 * std::max(1.0, std::abs(fw))) break;
    }
    res.W = best;
    res.objective = global_W_objective(best, w_tilde, beta, alpha, rho1, rho2, lambda_w);
    return res;
}

/// Dual ascent on the consensus and acyclicity constraints, then geometric
/// penalty growth capped at opt.rho_cap. Returns true if a cap was hit.
inline bool causal_dual_update(CausalAdmmState& st, const Matrix& w, const Matrix& a_stacked, double rho_cap = 1e16) {
    for (std::size_t k = 0; k < st.W_tilde.size(); ++k) {
        st.beta[k] += st.W_tilde[k] - w;
        st.gamma[k] += st.A_tilde[k] - a_stacked;
    }
    st.alpha += h_acyclicity(w);
    st.rho1 *= st.phi1;
    st.rho2 *= st.phi2;
    bool capped = false;
    if (st.rho1 > rho_cap) {
        st.rho1 = rho_cap;
        capped = true;
    }
    if (st.rho2 > rho_cap) {
        st.rho2 = rho_cap;
        capped = true;
    }
    return capped;
}

struct CausalTrace {
    int iterations = 0;
    bool converged = false;
    double h = 0.0;
    std::vector<double> h_trace;
    std::size_t dropped_slices = 0;
    int line_search_failures = 0;
    bool rho_capped = false;
};

/// Consensus ADMM over the usable slices (I_k > P): local solves, global A
/// and W, then duals, until h(W) <= h_tol or max_outer iterations.
inline CausalTrace run_causal_block(const TrajectorySet& traj, CausalGraph& g, CausalAdmmState& st,
                                   const CausalOptions& opt) {
    const Index lags = g.lags();
    std::vector<std::size_t> usable;
    for (std::size_t k = 0; k < traj.size(); ++k)
        if (traj[k].rows() > lags) usable.push_back(k);
    CausalTrace trace;
    trace.dropped_slices = traj.size() - usable.size();
    if (usable.empty()) throw ArgumentError("run_causal_block: no slice is longer than the lag order");
    if (st.W_tilde.size() != usable.size()) {
        const CausalAdmmState fresh = CausalAdmmState::init(usable.size(), g, opt);
        st.W_tilde = fresh.W_tilde;
        st.A_tilde = fresh.A_tilde;
        st.beta = fresh.beta;
        st.gamma = fresh.gamma;
    }

    Matrix a = g.stacked_A();
    for (int it = 0; it < opt.max_outer; ++it) {
        const Matrix w_now = g.W;
        parallel_for(usable.size(), [&](std::size_t i) {
            LocalSolution sol = local_update(traj[usable[i]], w_now, a, st.beta[i], st.gamma[i], st.rho2, lags);
            st.W_tilde[i] = std::move(sol.W_tilde);
            st.A_tilde[i] = std::move(sol.A_tilde);
        });
        if (lags > 0) a = global_A_update(st.A_tilde, st.gamma, st.rho2, opt.lambda_a);
        const GlobalWResult wres =
            global_W_update(st.W_tilde, st.beta, st.alpha, st.rho1, st.rho2, opt.lambda_w, g.W, opt);
        trace.line_search_failures += wres.line_search_failed ? 1 : 0;
        g.W = wres.W;
        g.W.diagonal().setZero();
        if (lags > 0) g.set_stacked_A(a);
        if (!g.W.allFinite() || !a.allFinite()) throw NumericError("run_causal_block: non-finite graph");

        trace.rho_capped |= causal_dual_update(st, g.W, a, opt.rho_cap);
        ++trace.iterations;
        trace.h = h_acyclicity(g.W);
        trace.h_trace.push_back(trace.h);
        if (trace.h <= opt.h_tol) {
            trace.converged = true;
            break;
        }
    }
    return trace;
}

/// Binary intra/inter adjacency after magnitude thresholding.
struct ThresholdedGraph {
    Adjacency W;
    std::vector<Adjacency> A;

    Adjacency stacked_A() const {
        const Index r = W.rows();
        Adjacency out(static_cast<Index>(A.size()) * r, r);
        for (std::size_t p = 0; p < A.size(); ++p) out.middleRows(static_cast<Index>(p) * r, r) = A[p];
        return out;
    }
};

inline ThresholdedGraph threshold_graph(const CausalGraph& g, double tau_w, double tau_a) {
    ThresholdedGraph out;
    out.W = binarize(g.W, tau_w);
    out.W.diagonal().setZero();
    for (const auto& ap : g.A) out.A.push_back(binarize(ap, tau_a));
    return out;
}

}  // namespace carted
