#include <gtest/gtest.h>

#include <random>

#include "carted/parafac2_block.hpp"
#include "carted/synthetic.hpp"
#include "support.hpp"

using namespace carted;
using oracle::randn;
using oracle::randv;

namespace {

// (1 / 2n) ||T - T W - sum_p M_p T A_p||^2 with dense shift matrices
double causal_term(const Matrix& t, const CausalGraph& g) {
    Matrix e = t - t * g.W;
    for (std::size_t p = 0; p < g.A.size(); ++p)
        e -= oracle::shift_dense(static_cast<Index>(p) + 1, t.rows()) * t * g.A[p];
    return e.squaredNorm() / (2.0 * static_cast<double>(t.rows()));
}

struct SmallInstance {
    Index n;
    Index j;
    Index r;
    Index p;
    Matrix x;
    Matrix v;
    Vector s;
    CausalGraph g;
};

SmallInstance small(std::mt19937_64& rng) {
    std::uniform_int_distribution<Index> rank(1, 3);
    std::uniform_int_distribution<Index> lags(0, 2);
    SmallInstance in;
    in.r = rank(rng);
    in.p = lags(rng);
    in.n = std::uniform_int_distribution<Index>(std::max(in.r, in.p + 1), 8)(rng);
    in.j = std::uniform_int_distribution<Index>(in.r, 6)(rng);
    in.x = randn(rng, in.n, in.j);
    in.v = randn(rng, in.j, in.r);
    in.s = randv(rng, in.r, 0.3, 2.0);
    in.g = oracle::random_graph(rng, in.r, in.p, 0.4);
    return in;
}

}  // namespace

TEST(UpdateU, MatchesQuadraticMinimiser) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 25; ++trial) {
        const SmallInstance in = small(rng);
        const Matrix ut = randn(rng, in.n, in.r);
        const Matrix uh = randn(rng, in.n, in.r);
        const Matrix mt = randn(rng, in.n, in.r, 0.2);
        const Matrix mh = randn(rng, in.n, in.r, 0.2);
        const double rho = randv(rng, 1, 0.1, 5.0)(0);
        auto f = [&](const Matrix& u) {
            return (in.x - u * in.s.asDiagonal() * in.v.transpose()).squaredNorm() +
                   0.5 * rho * (u - ut + mt).squaredNorm() + 0.5 * rho * (u - uh + mh).squaredNorm();
        };
        const Vector opt = oracle::quadratic_argmin([&](const Vector& z) { return f(oracle::unvec(z, in.n, in.r)); },
                                                    in.n * in.r);
        const Matrix u = update_U(in.x, in.s, in.v, ut, uh, mt, mh, rho);
        EXPECT_LE(oracle::relative_gap(f(u), f(oracle::unvec(opt, in.n, in.r))), 1e-6);
        EXPECT_LE(f(u), f(oracle::unvec(opt, in.n, in.r)) + 1e-9 * std::max(1.0, f(u)));
    }
}

TEST(UpdateU, FixedPointAndConsensusAverage) {
    std::mt19937_64 rng(102);
    const Matrix us = randn(rng, 5, 3);
    const Vector s = randv(rng, 3, 1.0, 2.0);
    const Matrix v = randn(rng, 4, 3);
    const Matrix x = us * s.asDiagonal() * v.transpose();
    const Matrix z = Matrix::Zero(5, 3);
    EXPECT_TRUE(update_U(x, s, v, us, us, z, z, 1.3).isApprox(us, 1e-10));
    const Matrix a = randn(rng, 5, 3);
    const Matrix b = randn(rng, 5, 3);
    EXPECT_TRUE(update_U(x, Vector::Zero(3), v, a, b, z, z, 0.7).isApprox(0.5 * (a + b), 1e-12));
}

TEST(UpdateUTilde, MatchesQuadraticMinimiser) {
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 25; ++trial) {
        const SmallInstance in = small(rng);
        const Matrix target = randn(rng, in.n, in.r);
        const double rho = randv(rng, 1, 0.1, 5.0)(0);
        auto f = [&](const Matrix& ut) {
            return causal_term(ut * in.s.asDiagonal(), in.g) + 0.5 * rho * (ut - target).squaredNorm();
        };
        const Matrix opt = oracle::unvec(
            oracle::quadratic_argmin([&](const Vector& z) { return f(oracle::unvec(z, in.n, in.r)); }, in.n * in.r),
            in.n, in.r);
        const Matrix ut = update_U_tilde(in.s, in.g, target, rho, in.n);
        EXPECT_LE(oracle::relative_gap(f(ut), f(opt)), 1e-6);
    }
}

TEST(UpdateUTilde, Examples) {
    std::mt19937_64 rng(104);
    const Matrix target = randn(rng, 4, 2);
    EXPECT_TRUE(update_U_tilde(Vector::Zero(2), CausalGraph::zeros(2, 1), target, 0.8, 4).isApprox(target, 1e-14));
    const Matrix one = update_U_tilde(Vector::Ones(1), CausalGraph::zeros(1, 0), Matrix::Constant(1, 1, 2.0), 1.0, 1);
    EXPECT_NEAR(one(0, 0), 1.0, 1e-14);
    EXPECT_THROW(update_U_tilde(Vector::Ones(2), CausalGraph::zeros(2, 0), target, 0.0, 4), ArgumentError);
    EXPECT_THROW(update_U_tilde(Vector::Ones(3), CausalGraph::zeros(2, 0), target, 1.0, 4), DimensionError);
}

TEST(UpdateUTilde, NormalMatrixMatchesExplicitPhi) {
    // Phi built column by column from the residual map applied to unit vectors
    std::mt19937_64 rng(105);
    const Index n = 6;
    const Index r = 2;
    const Vector s = randv(rng, r, 0.5, 2.0);
    const CausalGraph g = oracle::random_graph(rng, r, 1);
    Matrix phi(n * r, n * r);
    for (Index c = 0; c < n * r; ++c) {
        Vector e = Vector::Zero(n * r);
        e(c) = 1.0;
        const Matrix t = oracle::unvec(e, n, r) * s.asDiagonal();
        phi.col(c) = oracle::vec(t - t * g.W - oracle::shift_dense(1, n) * t * g.A[0]);
    }
    const UTildeSystem sys(s, g, 0.9, n);
    Matrix ref = phi.transpose() * phi / static_cast<double>(n);
    ref.diagonal().array() += 0.9;
    EXPECT_TRUE(sys.normal_matrix().isApprox(ref, 1e-12));
    const Matrix y = randn(rng, n, r);
    EXPECT_TRUE(oracle::vec(sys.apply(y)).isApprox(ref * oracle::vec(y), 1e-12));
}

TEST(UpdateUTilde, IterativePathAgreesWithDense) {
    std::mt19937_64 rng(106);
    const Index r = 3;
    const Index n = UTildeSystem::kDenseLimit / r + 5;
    const Vector s = randv(rng, r, 0.5, 2.0);
    const CausalGraph g = oracle::random_graph(rng, r, 2);
    const Matrix target = randn(rng, n, r);
    const UTildeSystem sys(s, g, 0.5, n);
    ASSERT_FALSE(sys.dense());
    const Matrix x = sys.solve(target);
    const Vector dense = Eigen::LLT<Matrix>(sys.normal_matrix()).solve(0.5 * oracle::vec(target));
    EXPECT_LE((oracle::vec(x) - dense).norm(), 1e-9 * dense.norm());
}

TEST(Procrustes, Examples) {
    EXPECT_TRUE(procrustes_q(Matrix::Identity(3, 3)).Q.isApprox(Matrix::Identity(3, 3)));
    std::mt19937_64 rng(107);
    const Matrix q0 = oracle::orthonormal(rng, 6, 3);
    EXPECT_TRUE(procrustes_q(5.0 * q0).Q.isApprox(q0, 1e-12));
    const ProcrustesResult zero = procrustes_q(Matrix::Zero(4, 2));
    EXPECT_TRUE(zero.degenerate);
    EXPECT_TRUE((zero.Q.transpose() * zero.Q).isApprox(Matrix::Identity(2, 2)));
    EXPECT_THROW(procrustes_q(Matrix::Zero(2, 3)), DimensionError);
}

TEST(Procrustes, DominatesRandomOrthonormal) {
    std::mt19937_64 rng(108);
    const Matrix b = randn(rng, 6, 3);
    const Matrix q = procrustes_q(b).Q;
    EXPECT_LE((q.transpose() * q - Matrix::Identity(3, 3)).norm(), 1e-12);
    const double best = (q.transpose() * b).trace();
    for (int i = 0; i < 1000; ++i) EXPECT_GE(best + 1e-12, (oracle::orthonormal(rng, 6, 3).transpose() * b).trace());
    // polar factor b (b^T b)^{-1/2} via the symmetric eigendecomposition
    Eigen::SelfAdjointEigenSolver<Matrix> eig(b.transpose() * b);
    const Matrix inv_sqrt = eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                            eig.eigenvectors().transpose();
    EXPECT_TRUE(q.isApprox(b * inv_sqrt, 1e-10));
}

TEST(UpdateH, Examples) {
    std::mt19937_64 rng(109);
    const Matrix u = randn(rng, 3, 3);
    const Matrix mu = randn(rng, 3, 3);
    EXPECT_TRUE(update_H({Matrix::Identity(3, 3)}, {u}, {mu}, {1.0}).isApprox(u + mu));
    const Matrix m = randn(rng, 2, 2);
    std::vector<Matrix> q;
    std::vector<Matrix> us;
    std::vector<Matrix> mus;
    for (int k = 0; k < 3; ++k) {
        q.push_back(oracle::orthonormal(rng, 5, 2));
        const Matrix muk = randn(rng, 5, 2);
        us.push_back(q.back() * m - muk);
        mus.push_back(muk);
    }
    EXPECT_TRUE(update_H(q, us, mus, {0.2, 3.0, 1.1}).isApprox(m, 1e-12));
    EXPECT_THROW(update_H({}, {}, {}, {}), ArgumentError);
}

TEST(UpdateH, MatchesQuadraticMinimiser) {
    std::mt19937_64 rng(110);
    for (int trial = 0; trial < 25; ++trial) {
        const Index r = 1 + trial % 3;
        std::vector<Matrix> q;
        std::vector<Matrix> u;
        std::vector<Matrix> mu;
        std::vector<double> rho;
        for (int k = 0; k < 3; ++k) {
            const Index n = r + k + 1;
            q.push_back(oracle::orthonormal(rng, n, r));
            u.push_back(randn(rng, n, r));
            mu.push_back(randn(rng, n, r, 0.3));
            rho.push_back(randv(rng, 1, 0.2, 3.0)(0));
        }
        auto f = [&](const Matrix& h) {
            double t = 0.0;
            for (int k = 0; k < 3; ++k) t += 0.5 * rho[k] * (u[k] + mu[k] - q[k] * h).squaredNorm();
            return t;
        };
        const Matrix opt = oracle::unvec(
            oracle::quadratic_argmin([&](const Vector& z) { return f(oracle::unvec(z, r, r)); }, r * r), r, r);
        const Matrix h = update_H(q, u, mu, rho);
        EXPECT_LE(oracle::relative_gap(f(h), f(opt)), 1e-6);
        // stationarity: analytic gradient and central differences at the returned H
        Matrix grad = Matrix::Zero(r, r);
        for (int k = 0; k < 3; ++k) grad -= rho[k] * q[k].transpose() * (u[k] + mu[k] - q[k] * h);
        EXPECT_LE(grad.norm(), 1e-8);
        for (Index i = 0; i < r * r; ++i) {
            Matrix hp = h;
            Matrix hm = h;
            hp(i) += 1e-4;
            hm(i) -= 1e-4;
            EXPECT_NEAR((f(hp) - f(hm)) / 2e-4, 0.0, 1e-8 * std::max(1.0, f(h)));
        }
    }
}

TEST(UpdateS, MatchesQuadraticMinimiser) {
    std::mt19937_64 rng(111);
    for (int trial = 0; trial < 25; ++trial) {
        const SmallInstance in = small(rng);
        const Matrix u = randn(rng, in.n, in.r);
        const Vector c = randn(rng, in.r, 1);
        const double rho = randv(rng, 1, 0.1, 5.0)(0);
        auto f = [&](const Vector& s) {
            return (in.x - u * s.asDiagonal() * in.v.transpose()).squaredNorm() + 0.5 * rho * (s - c).squaredNorm();
        };
        const Vector opt = oracle::quadratic_argmin(f, in.r);
        EXPECT_LE(oracle::relative_gap(f(update_S(in.x, u, in.v, c, rho)), f(opt)), 1e-6);
        // Khatri-Rao normal equations on vec(X) = (V (.) U) s
        const Matrix kr = khatri_rao(in.v, u);
        Matrix lhs = kr.transpose() * kr;
        lhs.diagonal().array() += 0.5 * rho;
        const Vector ref = lhs.ldlt().solve(kr.transpose() * oracle::vec(in.x) + 0.5 * rho * c);
        EXPECT_TRUE(update_S(in.x, u, in.v, c, rho).isApprox(ref, 1e-9));
    }
}

TEST(UpdateS, Examples) {
    std::mt19937_64 rng(112);
    const Matrix u = randn(rng, 5, 3);
    const Matrix v = randn(rng, 4, 3);
    const Vector s = randv(rng, 3, 1.0, 2.0);
    const Matrix x = u * s.asDiagonal() * v.transpose();
    EXPECT_TRUE(update_S(x, u, v, s, 1.5).isApprox(s, 1e-10));
    const Vector c = randn(rng, 3, 1);
    EXPECT_TRUE(update_S(Matrix::Zero(5, 4), Matrix::Zero(5, 3), v, c, 0.4).isApprox(c, 1e-14));
}

TEST(UpdateSTilde, MatchesQuadraticMinimiser) {
    std::mt19937_64 rng(113);
    for (int trial = 0; trial < 25; ++trial) {
        const SmallInstance in = small(rng);
        const Matrix u = randn(rng, in.n, in.r);
        const Vector target = randn(rng, in.r, 1);
        const double rho = randv(rng, 1, 0.1, 5.0)(0);
        auto f = [&](const Vector& s) {
            return causal_term(u * s.asDiagonal(), in.g) + 0.5 * rho * (s - target).squaredNorm();
        };
        const Vector opt = oracle::quadratic_argmin(f, in.r);
        EXPECT_LE(oracle::relative_gap(f(update_S_tilde(u, in.g, target, rho, in.n)), f(opt)), 1e-6);
    }
}

TEST(UpdateSTilde, ExamplesAndColumnwiseOracle) {
    const Vector t = Vector::Constant(2, 0.7);
    EXPECT_TRUE(update_S_tilde(Matrix::Zero(4, 2), CausalGraph::zeros(2, 1), t, 1.0, 4).isApprox(t));
    EXPECT_NEAR(update_S_tilde(Matrix::Ones(1, 1), CausalGraph::zeros(1, 0), Vector::Constant(1, 2.0), 1.0, 1)(0), 1.0,
                1e-14);
    // T_k materialised column by column: column r is the residual of e_r
    std::mt19937_64 rng(114);
    const Matrix u = randn(rng, 7, 3);
    const CausalGraph g = oracle::random_graph(rng, 3, 1);
    Matrix tk(7 * 3, 3);
    for (Index r = 0; r < 3; ++r) {
        Vector e = Vector::Zero(3);
        e(r) = 1.0;
        const Matrix tr = u * e.asDiagonal();
        tk.col(r) = oracle::vec(tr - tr * g.W - oracle::shift_dense(1, 7) * tr * g.A[0]);
    }
    EXPECT_TRUE(s_tilde_gram(u, g).isApprox(tk.transpose() * tk, 1e-12));
}

TEST(UpdateV, Examples) {
    std::mt19937_64 rng(115);
    const Matrix x = randn(rng, 3, 4);
    const IrregularTensor t({x});
    EXPECT_TRUE(update_V(t, {Matrix::Identity(3, 3)}, {Vector::Ones(3)}).isApprox(x.transpose(), 1e-12));
    EXPECT_THROW(update_V(t, {Matrix::Zero(3, 3)}, {Vector::Ones(3)}), NumericError);
}

TEST(UpdateV, RecoversGeneratingV) {
    SyntheticParams p;
    p.slices = 20;
    p.mean_degree_w = 0.0;
    p.mean_degree_a = 0.0;
    p.svar_noise = 0.0;
    const GroundTruth gt = assemble_instance(p);
    const Matrix v = update_V(gt.tensor, gt.factors.U, gt.factors.S);
    EXPECT_LE((v - gt.factors.V).norm(), 1e-8 * gt.factors.V.norm());
}

TEST(UpdateV, MatchesQuadraticMinimiserAndPerturbations) {
    std::mt19937_64 rng(116);
    for (int trial = 0; trial < 25; ++trial) {
        const Index r = 1 + trial % 3;
        const Index j = r + trial % 4;
        std::vector<Matrix> xs;
        std::vector<Matrix> u;
        std::vector<Vector> s;
        for (int k = 0; k < 3; ++k) {
            const Index n = r + 1 + k;
            xs.push_back(randn(rng, n, j));
            u.push_back(randn(rng, n, r));
            s.push_back(randv(rng, r, 0.5, 2.0));
        }
        const IrregularTensor x(xs);
        auto f = [&](const Matrix& v) {
            double t = 0.0;
            for (int k = 0; k < 3; ++k) t += (xs[k] - u[k] * s[k].asDiagonal() * v.transpose()).squaredNorm();
            return t;
        };
        const Matrix v = update_V(x, u, s);
        const Matrix opt = oracle::unvec(
            oracle::quadratic_argmin([&](const Vector& z) { return f(oracle::unvec(z, j, r)); }, j * r), j, r);
        EXPECT_LE(oracle::relative_gap(f(v), f(opt)), 1e-6);
        if (trial == 0) {
            for (int i = 0; i < 100; ++i) EXPECT_LE(f(v), f(v + randn(rng, j, r, 0.01)));
        }
    }
}

TEST(Penalty, Examples) {
    std::mt19937_64 rng(117);
    const Matrix v = oracle::orthonormal(rng, 5, 3);
    EXPECT_NEAR(penalty_rho(Vector::Ones(3), v, randn(rng, 4, 3)).rho_u, 1.0, 1e-12);
    const PenaltyPair z = penalty_rho(Vector::Ones(3), Matrix::Zero(5, 3), randn(rng, 4, 3));
    EXPECT_EQ(z.rho_u, kPenaltyFloor);
    EXPECT_EQ(z.rho_s, kPenaltyFloor);
    EXPECT_TRUE(z.clamped);
    const Vector s = randv(rng, 3, 0.5, 2.0);
    const Matrix w = randn(rng, 5, 3);
    const Matrix u = randn(rng, 4, 3);
    double ru = 0.0;
    double rs = 0.0;
    for (Index r = 0; r < 3; ++r) {
        ru += s(r) * s(r) * w.col(r).squaredNorm();
        rs += w.col(r).squaredNorm() * u.col(r).squaredNorm();
    }
    const PenaltyPair pp = penalty_rho(s, w, u);
    EXPECT_NEAR(pp.rho_u, ru / 3.0, 1e-12);
    EXPECT_NEAR(pp.rho_s, rs / 3.0, 1e-10);
}

TEST(Duals, Examples) {
    std::mt19937_64 rng(118);
    const Matrix u = randn(rng, 4, 2);
    Matrix mt = randn(rng, 4, 2);
    Matrix mh = randn(rng, 4, 2);
    const Matrix mt0 = mt;
    const Matrix mh0 = mh;
    dual_update_U(u, u, u, mt, mh);
    EXPECT_EQ(mt, mt0);
    EXPECT_EQ(mh, mh0);
    Matrix z1 = Matrix::Zero(4, 2);
    Matrix z2 = Matrix::Zero(4, 2);
    const Matrix d = randn(rng, 4, 2);
    dual_update_U(u, u - d, u, z1, z2);
    EXPECT_TRUE(z1.isApprox(d));
    dual_update_U(u, u - d, u, z1, z2);
    EXPECT_TRUE(z1.isApprox(2.0 * d));
    Vector ms = Vector::Zero(2);
    dual_update_S(Vector::Ones(2), Vector::Zero(2), ms);
    EXPECT_EQ(ms, Vector::Ones(2));
}

namespace {

struct BlockFixture {
    IrregularTensor x;
    Parafac2Factors f;
    CausalGraph g;
};

BlockFixture block_instance(std::uint64_t seed, bool exact) {
    std::mt19937_64 rng(seed);
    const Index r = 3;
    const Index j = 5;
    BlockFixture b;
    b.f.V = randn(rng, j, r);
    b.f.H = randn(rng, r, r);
    std::vector<Matrix> xs;
    for (int k = 0; k < 6; ++k) {
        const Index n = 4 + k;
        b.f.Q.push_back(oracle::orthonormal(rng, n, r));
        b.f.U.push_back(b.f.Q.back() * b.f.H);
        b.f.S.push_back(randv(rng, r, 0.5, 2.0));
        Matrix xk = b.f.U.back() * b.f.S.back().asDiagonal() * b.f.V.transpose();
        if (!exact) xk += randn(rng, n, j, 0.5);
        xs.push_back(xk);
    }
    b.x = IrregularTensor(xs);
    b.g = oracle::random_graph(rng, r, 1, 0.2);
    return b;
}

}  // namespace

TEST(UBlock, FixedPointTerminatesInOneSweep) {
    BlockFixture b = block_instance(119, true);
    b.g = CausalGraph::zeros(3, 1);
    TensorAdmmState st = TensorAdmmState::from_factors(b.f);
    BlockOptions opt;
    opt.causal_regularization = false;
    refresh_penalties(b.f, st, true, true);
    const Parafac2Factors before = b.f;
    const BlockTrace t = run_u_block(b.x, b.f, b.g, st, opt);
    EXPECT_EQ(t.sweeps, 1);
    EXPECT_TRUE(t.converged);
    EXPECT_LT(t.gap_hat, opt.feasibility_tol);
    for (std::size_t k = 0; k < b.f.U.size(); ++k) EXPECT_LE((b.f.U[k] - before.U[k]).norm(), 1e-8);
    const BlockTrace ts = run_s_block(b.x, b.f, b.g, st, opt);
    EXPECT_EQ(ts.sweeps, 1);
}

// The descent argument covers sweeps after the first: it needs the dual to
// equal -grad f / rho at the previous iterate, which holds once one sweep has
// run with the current V and rho.
void expect_descent_after_first_sweep(const BlockTrace& t, const char* what, std::uint64_t seed) {
    for (std::size_t i = 2; i < t.lagrangian.size(); ++i)
        EXPECT_LE(t.lagrangian[i], t.lagrangian[i - 1] + 1e-9) << what << " seed " << seed << " sweep " << i;
}

TEST(UBlock, UnregularisedDescentWithLipschitzPenalty) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        BlockFixture b = block_instance(200 + seed, false);
        std::mt19937_64 rng(300 + seed);
        for (auto& u : b.f.U) u = randn(rng, u.rows(), u.cols());
        TensorAdmmState st = TensorAdmmState::from_factors(b.f);
        refresh_penalties(b.f, st, true, true, 1.0, PenaltyRule::lipschitz);
        BlockOptions opt;
        opt.causal_regularization = false;
        opt.max_inner = 30;
        opt.feasibility_tol = 0.0;
        const BlockTrace t = run_u_block(b.x, b.f, b.g, st, opt);
        EXPECT_EQ(t.sweeps, 30);
        expect_descent_after_first_sweep(t, "U", seed);
    }
}

TEST(UBlock, ProjectedAuxiliaryIsFeasible) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        BlockFixture b = block_instance(250 + seed, false);
        TensorAdmmState st = TensorAdmmState::from_factors(b.f);
        refresh_penalties(b.f, st, true, true);
        BlockOptions opt;
        opt.max_inner = 10;
        run_u_block(b.x, b.f, b.g, st, opt);
        for (std::size_t k = 0; k < b.f.U.size(); ++k) {
            EXPECT_LE((b.f.Q[k].transpose() * b.f.Q[k] - Matrix::Identity(3, 3)).norm(), 1e-10);
            EXPECT_LE((st.U_hat[k] - b.f.Q[k] * b.f.H).norm(), 1e-12 * (1.0 + st.U_hat[k].norm()));
        }
    }
}

TEST(SBlock, DescentAfterFirstSweepWithLipschitzPenalty) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        BlockFixture b = block_instance(400 + seed, false);
        std::mt19937_64 rng(500 + seed);
        for (auto& s : b.f.S) s = randv(rng, s.size(), 0.1, 3.0);
        TensorAdmmState st = TensorAdmmState::from_factors(b.f);
        refresh_penalties(b.f, st, true, true, 1.0, PenaltyRule::lipschitz);
        BlockOptions opt;
        opt.max_inner = 30;
        opt.feasibility_tol = 0.0;
        const BlockTrace t = run_s_block(b.x, b.f, b.g, st, opt);
        expect_descent_after_first_sweep(t, "S", seed);
    }
}

TEST(SBlock, ExactSolveWithoutCausalTerm) {
    BlockFixture b = block_instance(450, false);
    TensorAdmmState st = TensorAdmmState::from_factors(b.f);
    refresh_penalties(b.f, st, true, true);
    BlockOptions opt;
    opt.causal_regularization = false;
    run_s_block(b.x, b.f, b.g, st, opt);
    for (std::size_t k = 0; k < b.f.S.size(); ++k) {
        const Matrix kr = khatri_rao(b.f.V, b.f.U[k]);
        const Vector ls = kr.colPivHouseholderQr().solve(oracle::vec(b.x[k]));
        EXPECT_TRUE(b.f.S[k].isApprox(ls, 1e-9));
    }
}

TEST(Penalty, LipschitzRuleIsTwiceLargestEigenvalue) {
    std::mt19937_64 rng(460);
    const Vector s = randv(rng, 3, 0.5, 2.0);
    const Matrix v = randn(rng, 5, 3);
    const Matrix u = randn(rng, 4, 3);
    const PenaltyPair p = penalty_rho(s, v, u, PenaltyRule::lipschitz);
    const Matrix gu = s.asDiagonal() * v.transpose() * v * s.asDiagonal();
    EXPECT_NEAR(p.rho_u, 2.0 * gu.operatorNorm(), 1e-9 * p.rho_u);
    EXPECT_GE(p.rho_u, 2.0 * penalty_rho(s, v, u).rho_u);
}

TEST(UBlock, FitDecreasesWithoutCausalTerm) {
    BlockFixture b = block_instance(600, false);
    std::mt19937_64 rng(601);
    for (auto& u : b.f.U) u = randn(rng, u.rows(), u.cols());
    b.g = CausalGraph::zeros(3, 1);
    TensorAdmmState st = TensorAdmmState::from_factors(b.f);
    refresh_penalties(b.f, st, true, true);
    BlockOptions opt;
    opt.causal_regularization = false;
    opt.max_inner = 20;
    const BlockTrace t = run_u_block(b.x, b.f, b.g, st, opt);
    EXPECT_LT(t.loss.back(), t.loss.front());
}
