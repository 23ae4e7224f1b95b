#pragma once

// Factor recovery (SIM, CPI, RR) and graph recovery (SHD, TPR, FDR).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "carted/causal_block.hpp"
#include "carted/graph_utils.hpp"
#include "carted/linalg.hpp"
#include "carted/tensor.hpp"

namespace carted {

/// Mean over true columns of the best raw cosine against any estimated column.
inline double sim(const Matrix& v_true, const Matrix& v_est) {
    detail::require_dims(v_true.rows() == v_est.rows() && v_true.cols() == v_est.cols(),
                         "sim: shapes differ (" + shape_str(v_true) + " vs " + shape_str(v_est) + ")");
    const Vector nt = v_true.colwise().norm();
    const Vector ne = v_est.colwise().norm();
    if (nt.minCoeff() == 0.0 || ne.minCoeff() == 0.0) throw ArgumentError("sim: zero column, cosine undefined");
    const Matrix cos = (v_true.transpose() * v_est).array() / (nt * ne.transpose()).array();
    return cos.rowwise().maxCoeff().mean();
}

/// 1 - sum_k ||U_k^T U_k - H^T H||^2 / sum_k ||H^T H||^2
inline double cpi(const std::vector<Matrix>& u, const Matrix& h_true) {
    const Matrix hth = h_true.transpose() * h_true;
    const double denom = static_cast<double>(u.size()) * hth.squaredNorm();
    if (!(denom > 0.0)) throw ArgumentError("cpi: H^T H is zero");
    double num = 0.0;
    for (const auto& uk : u) {
        detail::require_dims(uk.cols() == h_true.cols(), "cpi: rank mismatch");
        num += (uk.transpose() * uk - hth).squaredNorm();
    }
    return 1.0 - num / denom;
}

/// 1 - sum_k ||T_est^T T_est - T^T T||^2 / sum_k ||T^T T||^2
inline double rr(const TrajectorySet& t_est, const TrajectorySet& t_true) {
    detail::require_dims(t_est.size() == t_true.size(), "rr: slice counts differ");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < t_true.size(); ++k) {
        detail::require_dims(t_est[k].rows() == t_true[k].rows() && t_est[k].cols() == t_true[k].cols(),
                             "rr: slice " + std::to_string(k) + " shapes differ");
        const Matrix gt = t_true[k].transpose() * t_true[k];
        num += (t_est[k].transpose() * t_est[k] - gt).squaredNorm();
        den += gt.squaredNorm();
    }
    if (!(den > 0.0)) throw ArgumentError("rr: ground-truth Gram matrices are zero");
    return 1.0 - num / den;
}

struct GraphScores {
    int shd = 0;
    int tp = 0;
    int fp = 0;
    int fn = 0;
    double tpr = 1.0;
    double fdr = 0.0;
    bool tpr_undefined = false;  // no true edges; tpr reported as 1
    bool fdr_undefined = false;  // no estimated edges; fdr reported as 0
};

namespace detail {

inline void finish_rates(GraphScores& s) {
    if (s.tp + s.fn == 0) {
        s.tpr = 1.0;
        s.tpr_undefined = true;
    } else {
        s.tpr = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
    }
    if (s.tp + s.fp == 0) {
        s.fdr = 0.0;
        s.fdr_undefined = true;
    } else {
        s.fdr = static_cast<double>(s.fp) / static_cast<double>(s.tp + s.fp);
    }
}

}  // namespace detail

/// Intra-slice comparison. Each unordered pair {i, j} whose edge state
/// (none, i->j, j->i, both) differs adds one to SHD, so a reversed edge
/// counts once. TP/FP/FN are orientation-aware.
inline GraphScores graph_metrics(const Adjacency& g_true, const Adjacency& g_est) {
    detail::require_dims(g_true.rows() == g_true.cols() && g_est.rows() == g_est.cols() &&
                             g_true.rows() == g_est.rows(),
                         "graph_metrics: adjacency matrices must be square and equal-sized");
    const Index n = g_true.rows();
    GraphScores s;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const bool t = g_true(i, j) != 0;
            const bool e = g_est(i, j) != 0;
            s.tp += (t && e) ? 1 : 0;
            s.fp += (!t && e) ? 1 : 0;
            s.fn += (t && !e) ? 1 : 0;
        }
        for (Index j = i + 1; j < n; ++j) {
            const bool same = (g_true(i, j) != 0) == (g_est(i, j) != 0) && (g_true(j, i) != 0) == (g_est(j, i) != 0);
            s.shd += same ? 0 : 1;
        }
    }
    detail::finish_rates(s);
    return s;
}

/// Lagged comparison on the stacked A (any shape): edges are ordered in time,
/// so there are no reversals and SHD = missing + extra.
inline GraphScores lagged_graph_metrics(const Adjacency& a_true, const Adjacency& a_est) {
    detail::require_dims(a_true.rows() == a_est.rows() && a_true.cols() == a_est.cols(),
                         "lagged_graph_metrics: shapes differ");
    GraphScores s;
    for (Index i = 0; i < a_true.rows(); ++i)
        for (Index j = 0; j < a_true.cols(); ++j) {
            const bool t = a_true(i, j) != 0;
            const bool e = a_est(i, j) != 0;
            s.tp += (t && e) ? 1 : 0;
            s.fp += (!t && e) ? 1 : 0;
            s.fn += (t && !e) ? 1 : 0;
        }
    s.shd = s.fp + s.fn;
    detail::finish_rates(s);
    return s;
}

/// Column matching of an estimate to ground truth. perm[i] is the estimated
/// component matched to true component i.
struct Alignment {
    std::vector<Index> perm;
};

/// Permutation maximising the summed raw cosine between matched V columns.
/// Exhaustive up to rank 8, greedy on the cosine matrix beyond that.
inline Alignment align_components(const Matrix& v_true, const Matrix& v_est) {
    detail::require_dims(v_true.rows() == v_est.rows() && v_true.cols() == v_est.cols(),
                         "align_components: shapes differ (" + shape_str(v_true) + " vs " + shape_str(v_est) + ")");
    const Index r = v_true.cols();
    const Vector nt = v_true.colwise().norm();
    const Vector ne = v_est.colwise().norm();
    if (nt.minCoeff() == 0.0 || ne.minCoeff() == 0.0) throw ArgumentError("align_components: zero column");
    const Matrix cos = (v_true.transpose() * v_est).array() / (nt * ne.transpose()).array();
    Alignment out;
    std::vector<Index> perm(static_cast<std::size_t>(r));
    std::iota(perm.begin(), perm.end(), Index{0});
    if (r <= 8) {
        double best = -std::numeric_limits<double>::infinity();
        do {
            double total = 0.0;
            for (Index i = 0; i < r; ++i) total += cos(i, perm[static_cast<std::size_t>(i)]);
            if (total > best + 1e-15) {
                best = total;
                out.perm = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        return out;
    }
    out.perm.assign(static_cast<std::size_t>(r), -1);
    std::vector<char> row_used(static_cast<std::size_t>(r), 0);
    std::vector<char> col_used(static_cast<std::size_t>(r), 0);
    for (Index step = 0; step < r; ++step) {
        double best = -std::numeric_limits<double>::infinity();
        Index bi = 0;
        Index bj = 0;
        for (Index i = 0; i < r; ++i)
            for (Index j = 0; j < r; ++j)
                if (!row_used[i] && !col_used[j] && cos(i, j) > best) {
                    best = cos(i, j);
                    bi = i;
                    bj = j;
                }
        row_used[bi] = 1;
        col_used[bj] = 1;
        out.perm[static_cast<std::size_t>(bi)] = bj;
    }
    return out;
}

inline Matrix permute_columns(const Matrix& m, const std::vector<Index>& perm) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) out.col(static_cast<Index>(i)) = m.col(perm[i]);
    return out;
}

/// W'(i, j) = W(perm[i], perm[j]); the same for every A^(p).
inline CausalGraph permute_graph(const CausalGraph& g, const std::vector<Index>& perm) {
    auto apply = [&](const Matrix& m) {
        Matrix out(m.rows(), m.cols());
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (std::size_t j = 0; j < perm.size(); ++j)
                out(static_cast<Index>(i), static_cast<Index>(j)) = m(perm[i], perm[j]);
        return out;
    };
    CausalGraph out;
    out.W = apply(g.W);
    for (const auto& a : g.A) out.A.push_back(apply(a));
    return out;
}

/// Reorders the estimate to the truth's component order and fixes the
/// per-column scale split, which the model leaves free: V columns take the
/// norms of the true V columns, U columns the root-mean-square norm
/// ||H_true e_r|| (U_k^T U_k = H^T H makes that slice independent) and S_k
/// absorbs the rest, so every U_k S_k V^T is unchanged.
inline Parafac2Factors align_factors(const Parafac2Factors& est, const Alignment& al, const Matrix& v_true,
                                     const Matrix& h_true) {
    const Index r = est.rank();
    detail::require_dims(static_cast<Index>(al.perm.size()) == r && v_true.cols() == r && h_true.cols() == r,
                         "align_factors: rank mismatch");
    Parafac2Factors out;
    out.V = permute_columns(est.V, al.perm);
    Vector u_rms = Vector::Zero(r);
    for (const auto& u : est.U) u_rms += permute_columns(u, al.perm).colwise().squaredNorm().transpose();
    u_rms = (u_rms / static_cast<double>(std::max<std::size_t>(est.U.size(), 1))).cwiseSqrt();
    Vector v_scale(r);
    Vector u_scale(r);
    for (Index c = 0; c < r; ++c) {
        const double vn = out.V.col(c).norm();
        v_scale(c) = vn > 0.0 ? v_true.col(c).norm() / vn : 1.0;
        u_scale(c) = u_rms(c) > 0.0 ? h_true.col(c).norm() / u_rms(c) : 1.0;
    }
    const Vector s_scale = (v_scale.cwiseProduct(u_scale)).cwiseInverse();
    out.V = out.V * v_scale.asDiagonal();
    for (std::size_t k = 0; k < est.U.size(); ++k) {
        out.U.push_back(permute_columns(est.U[k], al.perm) * u_scale.asDiagonal());
        Vector s(r);
        for (Index c = 0; c < r; ++c) s(c) = est.S[k](al.perm[static_cast<std::size_t>(c)]) * s_scale(c);
        out.S.push_back(s);
    }
    // U_k P D = Q_k (H P D): Q_k is untouched, only H's columns move
    out.Q = est.Q;
    if (est.H.size() > 0) out.H = permute_columns(est.H, al.perm) * u_scale.asDiagonal();
    return out;
}

struct MetricsReport {
    double sim = 0.0;
    double cpi = 0.0;  // after alignment
    double rr = 0.0;   // after alignment
    double cpi_raw = 0.0;
    double rr_raw = 0.0;
    std::vector<Index> perm;
    GraphScores w;
    GraphScores a;
};

/// Scores an estimate against ground truth. Components are first matched to
/// the truth (align_components); CPI and RR use the scale-aligned factors, the
/// raw values are kept alongside. The estimated graph is permuted (not
/// rescaled) and binarised at (tau_w, tau_a); the true graph at zero.
inline MetricsReport evaluate(const Parafac2Factors& est, const CausalGraph& g_est, const Matrix& v_true,
                              const Matrix& h_true, const TrajectorySet& t_true, const CausalGraph& g_true,
                              double tau_w, double tau_a) {
    MetricsReport m;
    m.sim = sim(v_true, est.V);
    m.cpi_raw = cpi(est.U, h_true);
    m.rr_raw = rr(trajectories(est), t_true);
    const Alignment al = align_components(v_true, est.V);
    m.perm = al.perm;
    const Parafac2Factors aligned = align_factors(est, al, v_true, h_true);
    m.cpi = cpi(aligned.U, h_true);
    m.rr = rr(trajectories(aligned), t_true);
    const ThresholdedGraph te = threshold_graph(permute_graph(g_est, al.perm), tau_w, tau_a);
    const ThresholdedGraph tt = threshold_graph(g_true, 0.0, 0.0);
    m.w = graph_metrics(tt.W, te.W);
    if (!g_true.A.empty()) m.a = lagged_graph_metrics(tt.stacked_A(), te.stacked_A());
    return m;
}

}  // namespace carted
