#pragma once

// Dense building blocks shared by the tensor and causal blocks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "carted/errors.hpp"

namespace carted {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// Lag operator on an I_k x R trajectory: row t of the result is row t - lag of
/// the input, rows before `lag` are zero. Never materialised on the apply path.
struct ShiftOperator {
    Index lag = 0;
    Index dim = 1;

    ShiftOperator() = default;
    ShiftOperator(Index lag_, Index dim_) : lag(lag_), dim(dim_) {
        detail::require_arg(lag_ >= 0, "shift lag must be non-negative");
        detail::require_arg(dim_ >= 1, "shift dimension must be positive");
    }

    /// M x
    Matrix apply(const Matrix& x) const {
        detail::require_dims(x.rows() == dim, "shift_apply: expected " + std::to_string(dim) +
                                                  " rows, got " + shape_str(x));
        Matrix out = Matrix::Zero(x.rows(), x.cols());
        const Index keep = dim - std::min(lag, dim);
        if (keep > 0) out.bottomRows(keep) = x.topRows(keep);
        return out;
    }

    /// M^T x (shift up, zero fill at the bottom)
    Matrix apply_transpose(const Matrix& x) const {
        detail::require_dims(x.rows() == dim, "shift_apply_transpose: row mismatch " + shape_str(x));
        Matrix out = Matrix::Zero(x.rows(), x.cols());
        const Index keep = dim - std::min(lag, dim);
        if (keep > 0) out.topRows(keep) = x.bottomRows(keep);
        return out;
    }

    /// Dense I_k x I_k form; for tests and small explicit assemblies only.
    Matrix dense() const {
        Matrix m = Matrix::Zero(dim, dim);
        for (Index t = lag; t < dim; ++t) m(t, t - lag) = 1.0;
        return m;
    }
};

inline Matrix shift_apply(const ShiftOperator& op, const Matrix& x) { return op.apply(x); }

/// Column-wise Kronecker product: column r is kron(a.col(r), b.col(r)).
inline Matrix khatri_rao(const Matrix& a, const Matrix& b) {
    detail::require_dims(a.cols() == b.cols(), "khatri_rao: column counts differ (" + shape_str(a) +
                                                   " vs " + shape_str(b) + ")");
    Matrix out(a.rows() * b.rows(), a.cols());
    for (Index r = 0; r < a.cols(); ++r)
        for (Index i = 0; i < a.rows(); ++i)
            out.col(r).segment(i * b.rows(), b.rows()) = a(i, r) * b.col(r);
    return out;
}

inline Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Matrix exponential by scaling and squaring around a truncated Taylor series.
inline Matrix expm(const Matrix& a) {
    detail::require_dims(a.rows() == a.cols(), "expm: matrix must be square, got " + shape_str(a));
    const Index n = a.rows();
    if (n == 0) return Matrix(0, 0);
    const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm1 > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
    const Matrix scaled = a / std::ldexp(1.0, squarings);

    Matrix result = Matrix::Identity(n, n);
    Matrix term = Matrix::Identity(n, n);
    for (int k = 1; k <= 30; ++k) {
        term = (term * scaled) / static_cast<double>(k);
        result += term;
        if (term.cwiseAbs().maxCoeff() <= 1e-18 * result.cwiseAbs().maxCoeff()) break;
    }
    for (int s = 0; s < squarings; ++s) result = result * result;
    return result;
}

/// tr(exp(W o W)) - d. Zero exactly on weighted DAGs.
inline double h_acyclicity(const Matrix& w) {
    detail::require_dims(w.rows() == w.cols(), "h_acyclicity: W must be square, got " + shape_str(w));
    return expm(w.cwiseProduct(w)).trace() - static_cast<double>(w.rows());
}

/// Gradient of h_acyclicity: exp(W o W)^T o 2W.
inline Matrix grad_h(const Matrix& w) {
    detail::require_dims(w.rows() == w.cols(), "grad_h: W must be square, got " + shape_str(w));
    return expm(w.cwiseProduct(w)).transpose().cwiseProduct(2.0 * w);
}

/// Both h and its gradient from a single exponential.
inline std::pair<double, Matrix> h_and_grad(const Matrix& w) {
    detail::require_dims(w.rows() == w.cols(), "h_and_grad: W must be square");
    const Matrix e = expm(w.cwiseProduct(w));
    return {e.trace() - static_cast<double>(w.rows()), e.transpose().cwiseProduct(2.0 * w)};
}

inline double soft_threshold(double x, double tau) {
    if (x > tau) return x - tau;
    if (x < -tau) return x + tau;
    return 0.0;
}

/// Entrywise prox of tau * |.|_1.
inline Matrix soft_threshold(const Matrix& x, double tau) {
    detail::require_arg(tau >= 0.0, "soft_threshold: tau must be non-negative");
    return x.unaryExpr([tau](double v) { return soft_threshold(v, tau); });
}

struct SvdResult {
    Matrix u;      // m x r
    Vector sigma;  // r, non-increasing
    Matrix vt;     // r x n
};

inline SvdResult truncated_svd(const Matrix& b, Index rank) {
    detail::require_arg(rank >= 0 && rank <= std::min(b.rows(), b.cols()),
                        "truncated_svd: rank " + std::to_string(rank) + " exceeds min dimension of " +
                            shape_str(b));
    Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdResult out;
    out.u = svd.matrixU().leftCols(rank);
    out.sigma = svd.singularValues().head(rank);
    out.vt = svd.matrixV().leftCols(rank).transpose();
    return out;
}

/// Factorisation of a symmetric system, Cholesky first and LU as fallback.
class SymmetricSolver {
public:
    SymmetricSolver() = default;
    explicit SymmetricSolver(const Matrix& a) { compute(a); }

    void compute(const Matrix& a) {
        detail::require_dims(a.rows() == a.cols(), "SymmetricSolver: matrix must be square");
        llt_.compute(a);
        use_lu_ = llt_.info() != Eigen::Success;
        if (use_lu_) {
            lu_.compute(a);
            if (!(lu_.rcond() > 1e-300)) throw NumericError("singular linear system (rcond = 0)");
        }
        size_ = a.rows();
    }

    template <class Rhs>
    Matrix solve(const Rhs& rhs) const {
        Matrix x = use_lu_ ? Matrix(lu_.solve(rhs)) : Matrix(llt_.solve(rhs));
        if (!x.allFinite()) throw NumericError("non-finite solution of linear system");
        return x;
    }

    Index size() const { return size_; }
    bool used_cholesky() const { return !use_lu_; }

private:
    Eigen::LLT<Matrix> llt_;
    Eigen::PartialPivLU<Matrix> lu_;
    bool use_lu_ = false;
    Index size_ = 0;
};

/// Solves X * A = B for symmetric A (the right-division form used by the
/// factor updates).
inline Matrix right_solve_symmetric(const Matrix& b, const Matrix& a) {
    detail::require_dims(b.cols() == a.rows(), "right_solve: shape mismatch");
    return SymmetricSolver(a).solve(b.transpose()).transpose();
}

}  // namespace carted
