#pragma once

// Causally regularised PARAFAC2 updates: consensus ADMM for {U_k} with a
// causal auxiliary and a Procrustes-projected auxiliary, ADMM for {S_k},
// closed-form V and the per-slice penalty rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "carted/linalg.hpp"
#include "carted/parallel.hpp"
#include "carted/tensor.hpp"

namespace carted {

/// Auxiliaries, scaled duals and penalties of the two tensor-block ADMMs.
struct TensorAdmmState {
    std::vector<Matrix> U_tilde;
    std::vector<Matrix> U_hat;
    std::vector<Vector> S_tilde;
    std::vector<Matrix> mu_U_tilde;
    std::vector<Matrix> mu_U_hat;
    std::vector<Vector> mu_S;
    std::vector<double> rho_u;
    std::vector<double> rho_s;

    /// Auxiliaries copy the primal factors, duals start at zero, penalties at one.
    static TensorAdmmState from_factors(const Parafac2Factors& f) {
        TensorAdmmState s;
        const std::size_t k = f.U.size();
        s.U_tilde = f.U;
        s.U_hat = f.U;
        s.S_tilde = f.S;
        s.mu_U_tilde.reserve(k);
        s.mu_U_hat.reserve(k);
        s.mu_S.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            s.mu_U_tilde.push_back(Matrix::Zero(f.U[i].rows(), f.U[i].cols()));
            s.mu_U_hat.push_back(Matrix::Zero(f.U[i].rows(), f.U[i].cols()));
            s.mu_S.push_back(Vector::Zero(f.S[i].size()));
        }
        s.rho_u.assign(k, 1.0);
        s.rho_s.assign(k, 1.0);
        return s;
    }
};

/// trace: rho = tr(G) / R (mean eigenvalue of the block Gram G, the default).
/// lipschitz: rho = 2 lambda_max(G), the Lipschitz constant of the fit
/// gradient, which meets the descent condition of the two-block ADMMs.
enum class PenaltyRule { trace, lipschitz };

struct BlockOptions {
    double feasibility_tol = 1e-4;
    double loss_tol = 1e-6;
    int max_inner = 50;
    /// When false the causal term is dropped and the auxiliaries reduce to
    /// plain proximal copies (unregularised PARAFAC2).
    bool causal_regularization = true;
    /// Absolute slack allowed when checking that the augmented Lagrangian
    /// does not increase between sweeps. A rounding allowance of
    /// 64 eps |L| is added, which only matters for large-magnitude data.
    double monotone_slack = 1e-9;
    PenaltyRule penalty_rule = PenaltyRule::trace;
    /// Multiplier applied after the rule.
    double penalty_scale = 1.0;
};

/// Per-sweep diagnostics of one inner ADMM run.
struct BlockTrace {
    std::vector<double> lagrangian;  // entry 0 is the value before the first sweep
    std::vector<double> loss;
    int sweeps = 0;
    double gap_tilde = 0.0;
    double gap_hat = 0.0;
    bool converged = false;
    int monotone_violations = 0;
    int degenerate_procrustes = 0;
};

// ---------------------------------------------------------------------------
// U_k update
// ---------------------------------------------------------------------------

/// S_k V^T V S_k + rho I
inline Matrix u_system_matrix(const Vector& s, const Matrix& v, double rho) {
    const Index r = s.size();
    return s.asDiagonal() * (v.transpose() * v) * s.asDiagonal() + rho * Matrix::Identity(r, r);
}

inline Matrix update_U(const Matrix& x, const Vector& s, const Matrix& v, const Matrix& u_tilde,
                       const Matrix& u_hat, const Matrix& mu_tilde, const Matrix& mu_hat, double rho) {
    detail::require_dims(x.cols() == v.rows() && v.cols() == s.size(), "update_U: X, V, S shapes disagree");
    detail::require_dims(u_tilde.rows() == x.rows() && u_hat.rows() == x.rows(), "update_U: auxiliary rows differ");
    const Matrix rhs = x * v * s.asDiagonal() + 0.5 * rho * (u_tilde + u_hat - mu_tilde - mu_hat);
    return right_solve_symmetric(rhs, u_system_matrix(s, v, rho));
}

// ---------------------------------------------------------------------------
// Causal auxiliary for U_k
// ---------------------------------------------------------------------------

/// Kronecker-structured operator Phi = sum_j B_j (x) C_j acting on vec(U~),
/// with B_0 = (I - W)^T S, C_0 = I and B_p = -A_p^T S, C_p = M_p.
/// Solves (Phi^T Phi / I_k + rho I) u = rho * vec(U + mu).
class UTildeSystem {
public:
    static constexpr Index kDenseLimit = 2000;

    UTildeSystem(const Vector& s, const CausalGraph& g, double rho, Index visits)
        : s_(s), g_(g), rho_(rho), visits_(visits) {
        const Index r = s.size();
        detail::require_arg(rho > 0.0, "update_U_tilde: rho must be positive");
        detail::require_dims(g.nodes() == r, "update_U_tilde: graph size differs from rank");
        dense_ = visits * r <= kDenseLimit;
        if (dense_) solver_.compute(normal_matrix());
    }

    Matrix solve(const Matrix& u_plus_mu) const {
        detail::require_dims(u_plus_mu.rows() == visits_ && u_plus_mu.cols() == s_.size(),
                             "update_U_tilde: target has shape " + shape_str(u_plus_mu));
        if (dense_) {
            const Eigen::Map<const Vector> b(u_plus_mu.data(), u_plus_mu.size());
            Vector sol = solver_.solve(rho_ * b);
            return Eigen::Map<Matrix>(sol.data(), visits_, s_.size());
        }
        return solve_iterative(u_plus_mu);
    }

    /// (1 / I_k) Phi^T Phi + rho I, assembled through
    /// (B_i (x) C_i)^T (B_j (x) C_j) = (B_i^T B_j) (x) (C_i^T C_j).
    Matrix normal_matrix() const {
        const Index r = s_.size();
        const Index n = visits_ * r;
        std::vector<Matrix> b;
        std::vector<Matrix> c;
        b.push_back((Matrix::Identity(r, r) - g_.W).transpose() * s_.asDiagonal());
        c.push_back(Matrix::Identity(visits_, visits_));
        for (std::size_t p = 0; p < g_.A.size(); ++p) {
            b.push_back(-g_.A[p].transpose() * s_.asDiagonal());
            c.push_back(ShiftOperator(static_cast<Index>(p) + 1, visits_).dense());
        }
        Matrix out = Matrix::Zero(n, n);
        for (std::size_t i = 0; i < b.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j)
                out += kronecker(b[i].transpose() * b[j], c[i].transpose() * c[j]);
        out /= static_cast<double>(visits_);
        out.diagonal().array() += rho_;
        return out;
    }

    /// (1 / I_k) Phi^T Phi y + rho y without forming Phi.
    Matrix apply(const Matrix& y) const {
        const Matrix ys = y * s_.asDiagonal();
        const Index r = s_.size();
        Matrix e = ys * (Matrix::Identity(r, r) - g_.W);
        for (std::size_t p = 0; p < g_.A.size(); ++p)
            e.noalias() -= ShiftOperator(static_cast<Index>(p) + 1, visits_).apply(ys) * g_.A[p];
        Matrix back = e * (Matrix::Identity(r, r) - g_.W).transpose();
        for (std::size_t p = 0; p < g_.A.size(); ++p)
            back.noalias() -= ShiftOperator(static_cast<Index>(p) + 1, visits_).apply_transpose(e) * g_.A[p].transpose();
        back = back * s_.asDiagonal();
        return back / static_cast<double>(visits_) + rho_ * y;
    }

    bool dense() const { return dense_; }

private:
    Matrix solve_iterative(const Matrix& target) const {
        // Conjugate gradients on the SPD operator; the rho shift bounds the
        // condition number so convergence is fast.
        const Matrix b = rho_ * target;
        Matrix x = target;
        Matrix r = b - apply(x);
        Matrix p = r;
        double rs = r.squaredNorm();
        const double stop = 1e-28 * std::max(1.0, b.squaredNorm());
        for (Index it = 0; it < 10 * x.size() && rs > stop; ++it) {
            const Matrix ap = apply(p);
            const double alpha = rs / (p.cwiseProduct(ap)).sum();
            x += alpha * p;
            r -= alpha * ap;
            const double rs_new = r.squaredNorm();
            p = r + (rs_new / rs) * p;
            rs = rs_new;
        }
        if (!x.allFinite()) throw NumericError("update_U_tilde: iterative solve diverged");
        return x;
    }

    Vector s_;
    CausalGraph g_;
    double rho_;
    Index visits_;
    bool dense_ = true;
    SymmetricSolver solver_;
};

inline Matrix update_U_tilde(const Vector& s, const CausalGraph& g, const Matrix& u_plus_mu, double rho,
                             Index visits) {
    return UTildeSystem(s, g, rho, visits).solve(u_plus_mu);
}

// ---------------------------------------------------------------------------
// Procrustes projection and H
// ---------------------------------------------------------------------------

struct ProcrustesResult {
    Matrix Q;
    bool degenerate = false;
};

/// argmax_{Q^T Q = I} tr(Q^T b) via the polar factor of b.
inline ProcrustesResult procrustes_q(const Matrix& b) {
    detail::require_dims(b.rows() >= b.cols(), "procrustes_q: need at least as many rows as columns, got " +
                                                    shape_str(b));
    ProcrustesResult out;
    if (b.cwiseAbs().maxCoeff() == 0.0 || !b.allFinite()) {
        out.Q = Matrix::Identity(b.rows(), b.cols());
        out.degenerate = true;
        return out;
    }
    const SvdResult svd = truncated_svd(b, b.cols());
    out.Q = svd.u * svd.vt;
    return out;
}

/// rho-weighted mean of Q_k^T (U_k + mu_k).
inline Matrix update_H(const std::vector<Matrix>& q, const std::vector<Matrix>& u, const std::vector<Matrix>& mu_hat,
                       const std::vector<double>& rho) {
    detail::require_arg(!q.empty(), "update_H: empty slice list");
    detail::require_dims(q.size() == u.size() && u.size() == mu_hat.size() && u.size() == rho.size(),
                         "update_H: list lengths differ");
    const Index r = u.front().cols();
    Matrix acc = Matrix::Zero(r, r);
    double total = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        acc.noalias() += rho[k] * q[k].transpose() * (u[k] + mu_hat[k]);
        total += rho[k];
    }
    detail::require_arg(total > 0.0, "update_H: penalties must sum to a positive value");
    return acc / total;
}

// ---------------------------------------------------------------------------
// S_k update and its causal auxiliary
// ---------------------------------------------------------------------------

inline Vector update_S(const Matrix& x, const Matrix& u, const Matrix& v, const Vector& s_tilde_minus_mu,
                       double rho) {
    detail::require_dims(x.rows() == u.rows() && x.cols() == v.rows() && u.cols() == v.cols(),
                         "update_S: X, U, V shapes disagree");
    detail::require_arg(rho > 0.0, "update_S: rho must be positive");
    Matrix lhs = (v.transpose() * v).cwiseProduct(u.transpose() * u);
    lhs.diagonal().array() += 0.5 * rho;
    const Vector rhs = (u.transpose() * x * v).diagonal() + 0.5 * rho * s_tilde_minus_mu;
    return SymmetricSolver(lhs).solve(rhs);
}

/// T_k^T T_k for T_k = (I (.) U) - (W^T (.) U) - sum_p (A_p^T (.) M_p U), using
/// (B_i (.) C_i)^T (B_j (.) C_j) = (B_i^T B_j) * (C_i^T C_j).
inline Matrix s_tilde_gram(const Matrix& u, const CausalGraph& g) {
    const Index r = u.cols();
    detail::require_dims(g.nodes() == r, "update_S_tilde: graph size differs from rank");
    std::vector<Matrix> b;
    std::vector<Matrix> c;
    b.push_back((Matrix::Identity(r, r) - g.W).transpose());
    c.push_back(u);
    for (std::size_t p = 0; p < g.A.size(); ++p) {
        b.push_back(-g.A[p].transpose());
        c.push_back(ShiftOperator(static_cast<Index>(p) + 1, u.rows()).apply(u));
    }
    Matrix out = Matrix::Zero(r, r);
    for (std::size_t i = 0; i < b.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            out += (b[i].transpose() * b[j]).cwiseProduct(c[i].transpose() * c[j]);
    return out;
}

inline Vector update_S_tilde(const Matrix& u, const CausalGraph& g, const Vector& s_plus_mu, double rho,
                             Index visits) {
    detail::require_arg(rho > 0.0, "update_S_tilde: rho must be positive");
    detail::require_dims(s_plus_mu.size() == u.cols(), "update_S_tilde: target length differs from rank");
    Matrix lhs = s_tilde_gram(u, g) / static_cast<double>(visits);
    lhs.diagonal().array() += rho;
    return SymmetricSolver(lhs).solve(rho * s_plus_mu);
}

// ---------------------------------------------------------------------------
// V and penalties
// ---------------------------------------------------------------------------

/// V = (sum_k X_k^T U_k S_k)(sum_k S_k U_k^T U_k S_k)^{-1}
inline Matrix update_V(const IrregularTensor& x, const std::vector<Matrix>& u, const std::vector<Vector>& s) {
    detail::require_dims(u.size() == x.size() && s.size() == x.size(), "update_V: slice counts differ");
    const Index r = u.front().cols();
    Matrix num = Matrix::Zero(x.features(), r);
    Matrix gram = Matrix::Zero(r, r);
    for (std::size_t k = 0; k < x.size(); ++k) {
        const Matrix t = diag_scale_cols(u[k], s[k]);
        num.noalias() += x[k].transpose() * t;
        gram.noalias() += t.transpose() * t;
    }
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
        throw NumericError("update_V: factor Gram sum is singular (smallest eigenvalue " +
                           std::to_string(eig.eigenvalues().minCoeff()) + "); factors are rank deficient");
    }
    Matrix v = llt.solve(num.transpose()).transpose();
    if (!v.allFinite()) throw NumericError("update_V: non-finite result");
    return v;
}

struct PenaltyPair {
    double rho_u = 0.0;
    double rho_s = 0.0;
    bool clamped = false;
};

inline constexpr double kPenaltyFloor = 1e-6;

/// rho_u = tr(S V^T V S) / R, rho_s = tr(V^T V * U^T U) / R, floored at 1e-6.
inline PenaltyPair penalty_rho(const Vector& s, const Matrix& v, const Matrix& u,
                               PenaltyRule rule = PenaltyRule::trace) {
    const double r = static_cast<double>(s.size());
    const Matrix vtv = v.transpose() * v;
    const Matrix gu = s.asDiagonal() * vtv * s.asDiagonal();
    const Matrix gs = vtv.cwiseProduct(u.transpose() * u);
    PenaltyPair out;
    if (rule == PenaltyRule::trace) {
        out.rho_u = gu.trace() / r;
        out.rho_s = gs.trace() / r;
    } else {
        out.rho_u = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(gu, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
        out.rho_s = 2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(gs, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    }
    if (!(out.rho_u > kPenaltyFloor)) {
        out.rho_u = kPenaltyFloor;
        out.clamped = true;
    }
    if (!(out.rho_s > kPenaltyFloor)) {
        out.rho_s = kPenaltyFloor;
        out.clamped = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dual steps
// ---------------------------------------------------------------------------

inline void dual_update_U(const Matrix& u, const Matrix& u_tilde, const Matrix& u_hat, Matrix& mu_tilde,
                          Matrix& mu_hat) {
    mu_tilde += u - u_tilde;
    mu_hat += u - u_hat;
}

inline void dual_update_S(const Vector& s, const Vector& s_tilde, Vector& mu_s) { mu_s += s - s_tilde; }

/// Applies the scaled dual ascent step to every slice of the state.
inline void dual_updates(const Parafac2Factors& f, TensorAdmmState& st) {
    for (std::size_t k = 0; k < f.U.size(); ++k) {
        dual_update_U(f.U[k], st.U_tilde[k], st.U_hat[k], st.mu_U_tilde[k], st.mu_U_hat[k]);
        dual_update_S(f.S[k], st.S_tilde[k], st.mu_S[k]);
    }
}

// ---------------------------------------------------------------------------
// Block objectives
// ---------------------------------------------------------------------------

/// ||X_k - U_k S_k V^T||^2, the unit-weight fit used by the boxed updates.
inline double slice_fit(const Matrix& x, const Matrix& u, const Vector& s, const Matrix& v) {
    return (x - diag_scale_cols(u, s) * v.transpose()).squaredNorm();
}

/// Scaled augmented Lagrangian of the U block (U_hat is feasible by construction).
inline double u_block_lagrangian(const IrregularTensor& x, const Parafac2Factors& f, const CausalGraph& g,
                                 const TensorAdmmState& st, bool causal) {
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double rho = st.rho_u[k];
        total += slice_fit(x[k], f.U[k], f.S[k], f.V);
        if (causal) {
            total += slice_causal_loss(diag_scale_cols(st.U_tilde[k], f.S[k]), g);
            total += 0.5 * rho *
                     ((f.U[k] - st.U_tilde[k] + st.mu_U_tilde[k]).squaredNorm() - st.mu_U_tilde[k].squaredNorm());
        }
        total += 0.5 * rho * ((f.U[k] - st.U_hat[k] + st.mu_U_hat[k]).squaredNorm() - st.mu_U_hat[k].squaredNorm());
    }
    return total;
}

inline double s_block_lagrangian(const IrregularTensor& x, const Parafac2Factors& f, const CausalGraph& g,
                                 const TensorAdmmState& st, bool causal) {
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double rho = st.rho_s[k];
        total += slice_fit(x[k], f.U[k], f.S[k], f.V);
        if (causal) total += slice_causal_loss(diag_scale_cols(f.U[k], st.S_tilde[k]), g);
        total += 0.5 * rho * ((f.S[k] - st.S_tilde[k] + st.mu_S[k]).squaredNorm() - st.mu_S[k].squaredNorm());
    }
    return total;
}

/// Unit-weight fit plus causal residual at the primal factors.
inline double tensor_block_loss(const IrregularTensor& x, const Parafac2Factors& f, const CausalGraph& g, bool causal) {
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        total += slice_fit(x[k], f.U[k], f.S[k], f.V);
        if (causal) total += slice_causal_loss(diag_scale_cols(f.U[k], f.S[k]), g);
    }
    return total;
}

namespace detail {

inline double relative_gap(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        num += (a[k] - b[k]).squaredNorm();
        den += a[k].squaredNorm();
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double relative_gap(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        num += (a[k] - b[k]).squaredNorm();
        den += a[k].squaredNorm();
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string("non-finite values in ") + what);
}

inline void record_monotonicity(BlockTrace& trace, double value, double slack) {
    if (!trace.lagrangian.empty()) {
        const double prev = trace.lagrangian.back();
        const double allowance = slack + 64.0 * std::numeric_limits<double>::epsilon() * std::abs(prev);
        if (value > prev + allowance) ++trace.monotone_violations;
    }
    trace.lagrangian.push_back(value);
}

/// Relative change with a floor tied to the data magnitude, so that an exact
/// fit (loss near zero) counts as converged.
inline double loss_change(double prev, double now, double floor) {
    return std::abs(prev - now) / std::max({std::abs(prev), floor, std::numeric_limits<double>::min()});
}

inline double data_floor(const IrregularTensor& x) {
    double total = 0.0;
    for (const auto& s : x.slices()) total += s.squaredNorm();
    return 1e-12 * total;
}

}  // namespace detail

/// Sets rho_u / rho_s for every slice from the current factors, times scale.
inline int refresh_penalties(const Parafac2Factors& f, TensorAdmmState& st, bool u_block, bool s_block,
                             double scale = 1.0, PenaltyRule rule = PenaltyRule::trace) {
    detail::require_arg(scale > 0.0, "refresh_penalties: scale must be positive");
    int clamped = 0;
    for (std::size_t k = 0; k < f.U.size(); ++k) {
        const PenaltyPair p = penalty_rho(f.S[k], f.V, f.U[k], rule);
        if (u_block) st.rho_u[k] = scale * p.rho_u;
        if (s_block) st.rho_s[k] = scale * p.rho_s;
        clamped += p.clamped ? 1 : 0;
    }
    return clamped;
}

/// Inner ADMM for {U_k}: per sweep Q_k and H (giving U_hat = Q_k H), then
/// U_tilde, then U_k, then the duals. Penalties are read from the state.
inline BlockTrace run_u_block(const IrregularTensor& x, Parafac2Factors& f, const CausalGraph& g,
                              TensorAdmmState& st, const BlockOptions& opt) {
    const std::size_t nk = x.size();
    std::vector<SymmetricSolver> u_solvers(nk);
    std::vector<std::unique_ptr<UTildeSystem>> tilde_systems(nk);
    // Without the causal term the U_tilde copy carries no information and is
    // dropped: the system becomes S V^T V S + (rho/2) I against U_hat alone.
    const bool causal = opt.causal_regularization;
    parallel_for(nk, [&](std::size_t k) {
        u_solvers[k].compute(u_system_matrix(f.S[k], f.V, causal ? st.rho_u[k] : 0.5 * st.rho_u[k]));
        if (opt.causal_regularization)
            tilde_systems[k] = std::make_unique<UTildeSystem>(f.S[k], g, st.rho_u[k], x[k].rows());
    });

    const double floor = detail::data_floor(x);
    BlockTrace trace;
    trace.lagrangian.push_back(u_block_lagrangian(x, f, g, st, opt.causal_regularization));
    trace.loss.push_back(tensor_block_loss(x, f, g, opt.causal_regularization));
    std::vector<char> degenerate(nk, 0);

    for (int sweep = 0; sweep < opt.max_inner; ++sweep) {
        if (f.H.cwiseAbs().maxCoeff() == 0.0 || Eigen::FullPivLU<Matrix>(f.H).rank() < f.H.rows())
            f.H += 1e-10 * Matrix::Identity(f.H.rows(), f.H.cols());
        const Matrix ht = f.H.transpose();
        parallel_for(nk, [&](std::size_t k) {
            ProcrustesResult pr = procrustes_q((f.U[k] + st.mu_U_hat[k]) * ht);
            f.Q[k] = std::move(pr.Q);
            degenerate[k] = pr.degenerate ? 1 : 0;
        });
        f.H = update_H(f.Q, f.U, st.mu_U_hat, st.rho_u);

        parallel_for(nk, [&](std::size_t k) {
            st.U_hat[k] = f.Q[k] * f.H;
            if (causal) {
                st.U_tilde[k] = tilde_systems[k]->solve(f.U[k] + st.mu_U_tilde[k]);
                const Matrix rhs = x[k] * f.V * f.S[k].asDiagonal() +
                                   0.5 * st.rho_u[k] *
                                       (st.U_tilde[k] + st.U_hat[k] - st.mu_U_tilde[k] - st.mu_U_hat[k]);
                f.U[k] = u_solvers[k].solve(rhs.transpose()).transpose();
                dual_update_U(f.U[k], st.U_tilde[k], st.U_hat[k], st.mu_U_tilde[k], st.mu_U_hat[k]);
            } else {
                const Matrix rhs = x[k] * f.V * f.S[k].asDiagonal() + 0.5 * st.rho_u[k] * (st.U_hat[k] - st.mu_U_hat[k]);
                f.U[k] = u_solvers[k].solve(rhs.transpose()).transpose();
                st.mu_U_hat[k] += f.U[k] - st.U_hat[k];
                st.U_tilde[k] = f.U[k];
                st.mu_U_tilde[k].setZero();
            }
        });
        for (std::size_t k = 0; k < nk; ++k) {
            detail::require_finite(f.U[k], "U block");
            trace.degenerate_procrustes += degenerate[k];
        }

        ++trace.sweeps;
        detail::record_monotonicity(trace, u_block_lagrangian(x, f, g, st, opt.causal_regularization),
                                    opt.monotone_slack);
        const double loss = tensor_block_loss(x, f, g, opt.causal_regularization);
        const double prev = trace.loss.back();
        trace.loss.push_back(loss);
        trace.gap_tilde = causal ? detail::relative_gap(f.U, st.U_tilde) : 0.0;
        trace.gap_hat = detail::relative_gap(f.U, st.U_hat);
        const double change = detail::loss_change(prev, loss, floor);
        if (trace.gap_tilde < opt.feasibility_tol && trace.gap_hat < opt.feasibility_tol && change < opt.loss_tol) {
            trace.converged = true;
            break;
        }
    }
    return trace;
}

/// Inner ADMM for {S_k}: per sweep S_tilde, then S_k, then the dual.
inline BlockTrace run_s_block(const IrregularTensor& x, Parafac2Factors& f, const CausalGraph& g,
                              TensorAdmmState& st, const BlockOptions& opt) {
    const std::size_t nk = x.size();
    const Matrix vtv = f.V.transpose() * f.V;
    std::vector<SymmetricSolver> s_solvers(nk);
    std::vector<SymmetricSolver> tilde_solvers(nk);
    std::vector<Vector> xuv(nk);
    parallel_for(nk, [&](std::size_t k) {
        Matrix lhs = vtv.cwiseProduct(f.U[k].transpose() * f.U[k]);
        lhs.diagonal().array() += 0.5 * st.rho_s[k];
        s_solvers[k].compute(lhs);
        xuv[k] = (f.U[k].transpose() * x[k] * f.V).diagonal();
        if (opt.causal_regularization) {
            Matrix tl = s_tilde_gram(f.U[k], g) / static_cast<double>(x[k].rows());
            tl.diagonal().array() += st.rho_s[k];
            tilde_solvers[k].compute(tl);
        }
    });

    const double floor = detail::data_floor(x);
    BlockTrace trace;
    trace.lagrangian.push_back(s_block_lagrangian(x, f, g, st, opt.causal_regularization));
    trace.loss.push_back(tensor_block_loss(x, f, g, opt.causal_regularization));

    if (!opt.causal_regularization) {
        // S_k is unconstrained here: one exact least-squares solve per slice.
        parallel_for(nk, [&](std::size_t k) {
            Matrix lhs = vtv.cwiseProduct(f.U[k].transpose() * f.U[k]);
            f.S[k] = SymmetricSolver(lhs).solve(xuv[k]);
            st.S_tilde[k] = f.S[k];
            st.mu_S[k].setZero();
        });
        for (std::size_t k = 0; k < nk; ++k) detail::require_finite(f.S[k], "S block");
        trace.sweeps = 1;
        trace.converged = true;
        detail::record_monotonicity(trace, s_block_lagrangian(x, f, g, st, false), opt.monotone_slack);
        trace.loss.push_back(tensor_block_loss(x, f, g, false));
        return trace;
    }

    for (int sweep = 0; sweep < opt.max_inner; ++sweep) {
        parallel_for(nk, [&](std::size_t k) {
            const Vector target = f.S[k] + st.mu_S[k];
            if (opt.causal_regularization)
                st.S_tilde[k] = tilde_solvers[k].solve(st.rho_s[k] * target);
            else
                st.S_tilde[k] = target;
            f.S[k] = s_solvers[k].solve(xuv[k] + 0.5 * st.rho_s[k] * (st.S_tilde[k] - st.mu_S[k]));
            dual_update_S(f.S[k], st.S_tilde[k], st.mu_S[k]);
        });
        for (std::size_t k = 0; k < nk; ++k) detail::require_finite(f.S[k], "S block");

        ++trace.sweeps;
        detail::record_monotonicity(trace, s_block_lagrangian(x, f, g, st, opt.causal_regularization),
                                    opt.monotone_slack);
        const double loss = tensor_block_loss(x, f, g, opt.causal_regularization);
        const double prev = trace.loss.back();
        trace.loss.push_back(loss);
        trace.gap_tilde = detail::relative_gap(f.S, st.S_tilde);
        const double change = detail::loss_change(prev, loss, floor);
        if (trace.gap_tilde < opt.feasibility_tol && change < opt.loss_tol) {
            trace.converged = true;
            break;
        }
    }
    return trace;
}

}  // namespace carted
