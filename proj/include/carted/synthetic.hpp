#pragma once

// Ground-truth benchmark instances: ER causal graphs, PARAFAC2 factors with
// clustered V, SVAR-propagated trajectories and noisy irregular tensors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "carted/linalg.hpp"
#include "carted/tensor.hpp"

namespace carted {

using Rng = std::mt19937_64;

struct GroundTruth {
    Parafac2Factors factors;
    CausalGraph graph;
    TrajectorySet trajectories;
    IrregularTensor tensor;
    double noise_level = 0.0;
    double eta = 1.0;
    double mean_degree = 0.0;
};

struct SyntheticParams {
    std::size_t slices = 100;
    Index features = 12;
    Index rank = 4;
    Index min_visits = 10;
    Index max_visits = 21;
    Index lags = 1;
    double mean_degree_w = 2.0;
    double mean_degree_a = 2.0;
    double eta = 1.5;
    double noise_level = 0.0;
    /// SVAR innovation sd per row is svar_noise * ||b_t|| / sqrt(R).
    double svar_noise = 0.01;
    /// Use one innovation sd per slice, svar_noise * rms_t ||b_t|| / sqrt(R),
    /// so rows with a zero drive still receive noise.
    bool svar_noise_per_slice = false;
    /// Entries of a V column outside its feature block are multiplied by this.
    double off_block_scale = 0.05;
    /// Draw Q_k Haar-orthonormal instead of binary.
    bool haar_q = false;
    std::uint64_t seed = 0;
};

namespace detail {

inline double signed_uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution sign(0.5);
    const double m = mag(rng);
    return sign(rng) ? m : -m;
}

inline Matrix uniform_matrix(Rng& rng, Index rows, Index cols, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
}

}  // namespace detail

/// Weighted ER DAG: lower-triangular Bernoulli(mean_degree / d) edges with
/// weights uniform on [-hi,-lo] u [lo,hi], then a random node permutation.
inline Matrix gen_er_dag(Index d, double mean_degree, Rng& rng, double lo = 0.3, double hi = 0.5) {
    detail::require_arg(d >= 1, "gen_er_dag: need at least one node");
    detail::require_arg(mean_degree >= 0.0, "gen_er_dag: mean degree must be non-negative");
    const double prob = std::min(1.0, mean_degree / static_cast<double>(d));
    std::bernoulli_distribution edge(prob);
    Matrix lower = Matrix::Zero(d, d);
    for (Index i = 1; i < d; ++i)
        for (Index j = 0; j < i; ++j)
            if (edge(rng)) lower(i, j) = detail::signed_uniform(rng, lo, hi);
    std::vector<Index> perm(static_cast<std::size_t>(d));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix w = Matrix::Zero(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) w(perm[i], perm[j]) = lower(i, j);
    return w;
}

inline Matrix gen_er_dag(Index d, double mean_degree, std::uint64_t seed) {
    Rng rng(seed);
    return gen_er_dag(d, mean_degree, rng);
}

/// Lag matrices A^(1..P): Bernoulli(mean_degree / d) entries with magnitudes in
/// [0.3, 0.5] / eta^(p-1).
inline std::vector<Matrix> gen_inter_slice(Index d, Index lags, double mean_degree, double eta, Rng& rng) {
    detail::require_arg(eta >= 1.0, "gen_inter_slice: eta must be at least 1");
    detail::require_arg(lags >= 0 && d >= 1, "gen_inter_slice: invalid sizes");
    const double prob = std::min(1.0, mean_degree / static_cast<double>(d));
    std::bernoulli_distribution edge(prob);
    std::vector<Matrix> out;
    for (Index p = 1; p <= lags; ++p) {
        const double decay = 1.0 / std::pow(eta, static_cast<double>(p - 1));
        Matrix a = Matrix::Zero(d, d);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j)
                if (edge(rng)) a(i, j) = detail::signed_uniform(rng, 0.3 * decay, 0.5 * decay);
        out.push_back(std::move(a));
    }
    return out;
}

inline std::vector<Matrix> gen_inter_slice(Index d, Index lags, double mean_degree, double eta, std::uint64_t seed) {
    Rng rng(seed);
    return gen_inter_slice(d, lags, mean_degree, eta, rng);
}

/// Contiguous feature block [begin, end) owned by latent column r.
inline std::pair<Index, Index> feature_block(Index features, Index rank, Index r) {
    const Index base = features / rank;
    const Index extra = features % rank;
    const Index begin = r * base + std::min(r, extra);
    return {begin, begin + base + (r < extra ? 1 : 0)};
}

/// H, diag(S_k), V uniform on [5, 10]; V damped outside its feature block;
/// Q_k binary with one 1 per column in distinct rows (or Haar), U_k = Q_k H.
inline Parafac2Factors gen_factors(std::size_t slices, Index features, Index rank, Index min_visits,
                                   Index max_visits, Rng& rng, double off_block_scale = 0.05, bool haar_q = false) {
    detail::require_arg(rank >= 1 && features >= rank, "gen_factors: need 1 <= rank <= features");
    detail::require_arg(min_visits <= max_visits, "gen_factors: empty visit range");
    detail::require_arg(max_visits >= rank, "gen_factors: visit range cannot hold rank orthonormal columns");
    Parafac2Factors f;
    f.H = detail::uniform_matrix(rng, rank, rank, 5.0, 10.0);
    f.V = detail::uniform_matrix(rng, features, rank, 5.0, 10.0);
    for (Index r = 0; r < rank; ++r) {
        const auto [b, e] = feature_block(features, rank, r);
        for (Index j = 0; j < features; ++j)
            if (j < b || j >= e) f.V(j, r) *= off_block_scale;
    }
    std::uniform_int_distribution<Index> visits(std::max(min_visits, rank), max_visits);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t k = 0; k < slices; ++k) {
        const Index n = visits(rng);
        Matrix q = Matrix::Zero(n, rank);
        if (haar_q) {
            Matrix g(n, rank);
            for (Index j = 0; j < rank; ++j)
                for (Index i = 0; i < n; ++i) g(i, j) = gauss(rng);
            Eigen::HouseholderQR<Matrix> qr(g);
            q = qr.householderQ() * Matrix::Identity(n, rank);
        } else {
            std::vector<Index> rows(static_cast<std::size_t>(n));
            std::iota(rows.begin(), rows.end(), Index{0});
            std::shuffle(rows.begin(), rows.end(), rng);
            for (Index r = 0; r < rank; ++r) q(rows[r], r) = 1.0;
        }
        f.Q.push_back(q);
        f.U.push_back(q * f.H);
        f.S.push_back(detail::uniform_matrix(rng, rank, 1, 5.0, 10.0).col(0));
    }
    return f;
}

/// Row recursion t_t = (b_t + sum_p t_{t-p} A^(p) + e_t)(I - W)^{-1}; lagged
/// rows before the start of the series are zero, as with the shift operator.
inline TrajectorySet propagate_svar(const TrajectorySet& base, const CausalGraph& g, double svar_noise, Rng& rng,
                                    bool per_slice = false) {
    const Index r = g.nodes();
    const Matrix iw = Matrix::Identity(r, r) - g.W;
    const Eigen::PartialPivLU<Matrix> lu(iw.transpose());
    if (!(std::abs(iw.determinant()) > 1e-12)) throw NumericError("propagate_svar: I - W is singular");
    std::normal_distribution<double> gauss(0.0, 1.0);
    TrajectorySet out;
    out.reserve(base.size());
    for (const auto& b : base) {
        detail::require_dims(b.cols() == r, "propagate_svar: base width differs from graph size");
        Matrix t = Matrix::Zero(b.rows(), r);
        const double slice_rms = b.rows() > 0 ? b.norm() / std::sqrt(static_cast<double>(b.rows())) : 0.0;
        for (Index row = 0; row < b.rows(); ++row) {
            Eigen::RowVectorXd drive = b.row(row);
            for (Index p = 1; p <= g.lags(); ++p)
                if (row - p >= 0) drive += t.row(row - p) * g.A[static_cast<std::size_t>(p - 1)];
            if (svar_noise > 0.0) {
                const double sd =
                    svar_noise * (per_slice ? slice_rms : b.row(row).norm()) / std::sqrt(static_cast<double>(r));
                for (Index c = 0; c < r; ++c) drive(c) += sd * gauss(rng);
            }
            // t (I - W) = drive  <=>  (I - W)^T t^T = drive^T
            t.row(row) = lu.solve(drive.transpose()).transpose();
        }
        out.push_back(std::move(t));
    }
    return out;
}

inline double entry_sd(const Matrix& m) {
    const double mean = m.mean();
    const double n = static_cast<double>(m.size());
    if (n < 2) return 0.0;
    return std::sqrt((m.array() - mean).square().sum() / (n - 1.0));
}

inline GroundTruth assemble_instance(const SyntheticParams& p) {
    detail::require_arg(p.slices >= 1 && p.rank >= 1 && p.lags >= 0, "assemble_instance: invalid sizes");
    detail::require_arg(p.noise_level >= 0.0, "assemble_instance: noise level must be non-negative");
    Rng rng(p.seed);
    GroundTruth gt;
    gt.noise_level = p.noise_level;
    gt.eta = p.eta;
    gt.mean_degree = p.mean_degree_w;
    gt.graph.W = gen_er_dag(p.rank, p.mean_degree_w, rng);
    gt.graph.A = gen_inter_slice(p.rank, p.lags, p.mean_degree_a, p.eta, rng);
    gt.factors = gen_factors(p.slices, p.features, p.rank, p.min_visits, p.max_visits, rng, p.off_block_scale, p.haar_q);
    gt.trajectories = propagate_svar(trajectories(gt.factors), gt.graph, p.svar_noise, rng, p.svar_noise_per_slice);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Matrix> slices;
    slices.reserve(p.slices);
    for (std::size_t k = 0; k < p.slices; ++k) {
        Matrix x = gt.trajectories[k] * gt.factors.V.transpose();
        if (p.noise_level > 0.0) {
            const double sd = p.noise_level * entry_sd(x);
            for (Index j = 0; j < x.cols(); ++j)
                for (Index i = 0; i < x.rows(); ++i) x(i, j) += sd * gauss(rng);
        }
        slices.push_back(std::move(x));
    }
    gt.tensor = IrregularTensor(std::move(slices));
    return gt;
}

/// sum_k 1/2 ||X_k - T_k V^T||^2 for explicit trajectories.
inline double trajectory_fit_loss(const IrregularTensor& x, const TrajectorySet& t, const Matrix& v) {
    detail::require_dims(x.size() == t.size(), "trajectory_fit_loss: slice counts differ");
    double total = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) total += 0.5 * (x[k] - t[k] * v.transpose()).squaredNorm();
    return total;
}

}  // namespace carted
