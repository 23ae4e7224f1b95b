#pragma once

// Irregular tensors, PARAFAC2 factor sets and the joint objective.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "carted/linalg.hpp"

namespace carted {

/// Ragged stack of K slices X_k (I_k x J) sharing the feature mode J.
class IrregularTensor {
public:
    IrregularTensor() = default;

    explicit IrregularTensor(std::vector<Matrix> slices) : slices_(std::move(slices)) {
        detail::require_arg(!slices_.empty(), "IrregularTensor: need at least one slice");
        const Index j = slices_.front().cols();
        detail::require_arg(j >= 1, "IrregularTensor: feature dimension must be positive");
        for (std::size_t k = 0; k < slices_.size(); ++k) {
            detail::require_dims(slices_[k].cols() == j, "IrregularTensor: slice " + std::to_string(k) +
                                                             " has " + std::to_string(slices_[k].cols()) +
                                                             " columns, expected " + std::to_string(j));
            detail::require_arg(slices_[k].rows() >= 1,
                                "IrregularTensor: slice " + std::to_string(k) + " is empty");
        }
    }

    std::size_t size() const { return slices_.size(); }
    Index features() const { return slices_.empty() ? 0 : slices_.front().cols(); }
    const Matrix& operator[](std::size_t k) const { return slices_[k]; }
    const std::vector<Matrix>& slices() const { return slices_; }

    std::vector<Index> visit_counts() const {
        std::vector<Index> out;
        out.reserve(slices_.size());
        for (const auto& s : slices_) out.push_back(s.rows());
        return out;
    }

    Index min_visits() const {
        Index m = slices_.front().rows();
        for (const auto& s : slices_) m = std::min(m, s.rows());
        return m;
    }

private:
    std::vector<Matrix> slices_;
};

/// {U_k}, diagonal {S_k} (stored as vectors), shared V and the Procrustes pair
/// ({Q_k}, H) with U_k ~ Q_k H.
struct Parafac2Factors {
    std::vector<Matrix> U;
    std::vector<Vector> S;
    Matrix V;
    std::vector<Matrix> Q;
    Matrix H;

    Index rank() const { return V.cols(); }
    std::size_t slices() const { return U.size(); }
};

/// T_k = U_k S_k, one I_k x R matrix per slice.
using TrajectorySet = std::vector<Matrix>;

/// Intra-slice weights W and lag matrices A^(1..P).
struct CausalGraph {
    Matrix W;
    std::vector<Matrix> A;

    Index nodes() const { return W.rows(); }
    Index lags() const { return static_cast<Index>(A.size()); }

    static CausalGraph zeros(Index r, Index p) {
        return CausalGraph{Matrix::Zero(r, r), std::vector<Matrix>(static_cast<std::size_t>(p), Matrix::Zero(r, r))};
    }

    /// [A^(1); ...; A^(P)], (P R) x R.
    Matrix stacked_A() const {
        Matrix out(static_cast<Index>(A.size()) * nodes(), nodes());
        for (std::size_t p = 0; p < A.size(); ++p) out.middleRows(static_cast<Index>(p) * nodes(), nodes()) = A[p];
        return out;
    }

    void set_stacked_A(const Matrix& stacked) {
        const Index r = nodes();
        detail::require_dims(stacked.cols() == r && stacked.rows() == lags() * r, "set_stacked_A: shape mismatch");
        for (std::size_t p = 0; p < A.size(); ++p) A[p] = stacked.middleRows(static_cast<Index>(p) * r, r);
    }
};

inline Matrix diag_scale_cols(const Matrix& u, const Vector& s) { return u * s.asDiagonal(); }

inline TrajectorySet trajectories(const Parafac2Factors& f) {
    TrajectorySet out;
    out.reserve(f.U.size());
    for (std::size_t k = 0; k < f.U.size(); ++k) out.push_back(diag_scale_cols(f.U[k], f.S[k]));
    return out;
}

/// Sum of slice Frobenius norms (the irregular-tensor convention).
inline double frobenius_norm(const IrregularTensor& x) {
    double total = 0.0;
    for (const auto& s : x.slices()) total += s.norm();
    return total;
}

/// Root of the summed squared entries across all slices.
inline double frobenius_norm_rss(const IrregularTensor& x) {
    double total = 0.0;
    for (const auto& s : x.slices()) total += s.squaredNorm();
    return std::sqrt(total);
}

inline void check_factors(const Parafac2Factors& f) {
    const Index r = f.V.cols();
    detail::require_dims(f.S.size() == f.U.size(), "factors: U and S slice counts differ");
    for (std::size_t k = 0; k < f.U.size(); ++k) {
        detail::require_dims(f.U[k].cols() == r, "factors: U_" + std::to_string(k) + " has wrong rank");
        detail::require_dims(f.S[k].size() == r, "factors: S_" + std::to_string(k) + " has wrong rank");
    }
}

inline IrregularTensor reconstruct(const Parafac2Factors& f) {
    check_factors(f);
    std::vector<Matrix> out;
    out.reserve(f.U.size());
    for (std::size_t k = 0; k < f.U.size(); ++k) out.push_back(diag_scale_cols(f.U[k], f.S[k]) * f.V.transpose());
    return IrregularTensor(std::move(out));
}

/// T - T W - sum_p M_p T A^(p)
inline Matrix causal_residual(const Matrix& t, const CausalGraph& g) {
    detail::require_dims(t.cols() == g.nodes(), "causal_residual: trajectory has " + std::to_string(t.cols()) +
                                                    " columns, graph has " + std::to_string(g.nodes()) + " nodes");
    Matrix e = t - t * g.W;
    for (std::size_t p = 0; p < g.A.size(); ++p) {
        const ShiftOperator m(static_cast<Index>(p) + 1, t.rows());
        e.noalias() -= m.apply(t) * g.A[p];
    }
    return e;
}

/// (1 / 2 I_k) ||T_k - T_k W - sum_p M_p T_k A^(p)||^2
inline double slice_causal_loss(const Matrix& t, const CausalGraph& g) {
    return causal_residual(t, g).squaredNorm() / (2.0 * static_cast<double>(t.rows()));
}

inline double causal_loss(const TrajectorySet& t, const CausalGraph& g) {
    double total = 0.0;
    for (const auto& tk : t) total += slice_causal_loss(tk, g);
    return total;
}

/// sum_k 1/2 ||X_k - U_k S_k V^T||^2
inline double fit_loss(const IrregularTensor& x, const Parafac2Factors& f) {
    detail::require_dims(x.size() == f.U.size(), "fit_loss: slice counts differ");
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
        total += 0.5 * (x[k] - diag_scale_cols(f.U[k], f.S[k]) * f.V.transpose()).squaredNorm();
    return total;
}

inline double l1_penalty(const CausalGraph& g, double lambda_w, double lambda_a) {
    double a = 0.0;
    for (const auto& ap : g.A) a += ap.cwiseAbs().sum();
    return lambda_w * g.W.cwiseAbs().sum() + lambda_a * a;
}

/// Fit term + causal residual + l1 penalties.
inline double joint_objective(const IrregularTensor& x, const Parafac2Factors& f, const CausalGraph& g,
                              double lambda_w, double lambda_a) {
    check_factors(f);
    detail::require_arg(g.lags() < x.min_visits(),
                        "joint_objective: lag order " + std::to_string(g.lags()) +
                            " is not below the shortest series (" + std::to_string(x.min_visits()) + ")");
    detail::require_dims(g.nodes() == f.rank(), "joint_objective: graph size differs from rank");
    return fit_loss(x, f) + causal_loss(trajectories(f), g) + l1_penalty(g, lambda_w, lambda_a);
}

}  // namespace carted
