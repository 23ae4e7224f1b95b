#pragma once

// Test-side oracles. Nothing here calls into the solver code paths it is
// used to check.

#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "carted/linalg.hpp"
#include "carted/tensor.hpp"

namespace oracle {

using carted::Index;
using carted::Matrix;
using carted::Vector;

inline Matrix randn(std::mt19937_64& rng, Index r, Index c, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = n(rng);
    return m;
}

inline Vector randv(std::mt19937_64& rng, Index r, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(r);
    for (Index i = 0; i < r; ++i) v(i) = u(rng);
    return v;
}

inline Matrix orthonormal(std::mt19937_64& rng, Index r, Index c) {
    Eigen::HouseholderQR<Matrix> qr(randn(rng, r, c));
    return qr.householderQ() * Matrix::Identity(r, c);
}

/// Dense lag-p shift: (M y)_t = y_{t-p}, zero for t < p.
inline Matrix shift_dense(Index p, Index n) {
    Matrix m = Matrix::Zero(n, n);
    for (Index t = p; t < n; ++t) m(t, t - p) = 1.0;
    return m;
}

/// Minimiser of a quadratic f: R^n -> R from 1 + 2n + n(n-1)/2 evaluations
/// (exact gradient and Hessian for quadratics), then an LU solve.
inline Vector quadratic_argmin(const std::function<double(const Vector&)>& f, Index n, double h = 1.0) {
    const Vector zero = Vector::Zero(n);
    const double f0 = f(zero);
    Vector fp(n);
    Vector fm(n);
    for (Index i = 0; i < n; ++i) {
        Vector e = zero;
        e(i) = h;
        fp(i) = f(e);
        fm(i) = f(-e);
    }
    Matrix hess(n, n);
    Vector grad(n);
    for (Index i = 0; i < n; ++i) {
        grad(i) = (fp(i) - fm(i)) / (2.0 * h);
        hess(i, i) = (fp(i) - 2.0 * f0 + fm(i)) / (h * h);
        for (Index j = 0; j < i; ++j) {
            Vector e = zero;
            e(i) = h;
            e(j) = h;
            const double fij = f(e);
            hess(i, j) = hess(j, i) = (fij - fp(i) - fp(j) + f0) / (h * h);
        }
    }
    return Eigen::FullPivLU<Matrix>(hess).solve(-grad);
}

inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unvec(const Vector& v, Index r, Index c) { return Eigen::Map<const Matrix>(v.data(), r, c); }

/// |f(x) - f(x*)| / max(1, |f(x*)|)
inline double relative_gap(double candidate, double optimum) {
    return std::abs(candidate - optimum) / std::max(1.0, std::abs(optimum));
}

/// Random DAG weights on d nodes: strictly lower triangular, then permuted.
inline Matrix random_dag(std::mt19937_64& rng, Index d, double density = 0.5) {
    std::bernoulli_distribution e(density);
    std::uniform_real_distribution<double> w(0.3, 0.8);
    Matrix low = Matrix::Zero(d, d);
    for (Index i = 1; i < d; ++i)
        for (Index j = 0; j < i; ++j)
            if (e(rng)) low(i, j) = w(rng) * (e(rng) ? 1.0 : -1.0);
    std::vector<Index> p(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) p[static_cast<std::size_t>(i)] = i;
    std::shuffle(p.begin(), p.end(), rng);
    Matrix out(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) out(p[i], p[j]) = low(i, j);
    return out;
}

inline carted::CausalGraph random_graph(std::mt19937_64& rng, Index r, Index lags, double scale = 0.3) {
    carted::CausalGraph g;
    g.W = random_dag(rng, r);
    for (Index p = 0; p < lags; ++p) g.A.push_back(scale * randn(rng, r, r));
    return g;
}

}  // namespace oracle
