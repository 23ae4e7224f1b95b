#pragma once

// Outer block-coordinate loop: U block, S block, V, causal block, once each
// per outer iteration. Also the two-step baseline and the warm start for V.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "carted/causal_block.hpp"
#include "carted/parafac2_block.hpp"
#include "carted/synthetic.hpp"
#include "carted/tensor.hpp"

namespace carted {

enum class FitMode { joint, two_step };

inline const char* to_string(FitMode m) { return m == FitMode::joint ? "joint" : "two-step"; }

enum class GraphInit { identity, zero };

struct SolverConfig {
    Index rank = 4;
    Index lags = 1;
    double lambda_w = 0.5;
    double lambda_a = 0.5;
    double tau_w = 0.3;
    double tau_a = 0.1;
    BlockOptions block;
    CausalOptions causal;
    int outer_max = 100;
    double outer_tol = 1e-6;
    int outer_patience = 3;
    FitMode mode = FitMode::joint;
    GraphInit graph_init = GraphInit::identity;
    std::optional<Matrix> warm_start_V;
    /// Warm-start V entries below this fraction of their column's max |v| are zeroed.
    double warm_start_threshold = 0.1;
    int warm_start_runs = 0;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require_arg(rank >= 1, "config: rank must be at least 1");
        detail::require_arg(lags >= 0, "config: lag order must be non-negative");
        detail::require_arg(block.feasibility_tol > 0 && block.loss_tol > 0 && outer_tol > 0 && causal.h_tol > 0,
                            "config: tolerances must be positive");
        detail::require_arg(block.max_inner >= 1 && outer_max >= 1 && causal.max_outer >= 1,
                            "config: iteration limits must be positive");
        detail::require_arg(lambda_w >= 0 && lambda_a >= 0, "config: lambdas must be non-negative");
        detail::require_arg(causal.phi1 >= 1 && causal.phi2 >= 1, "config: growth factors must be >= 1");
        detail::require_arg(causal.rho1 > 0 && causal.rho2 > 0, "config: initial penalties must be positive");
        detail::require_arg(block.penalty_scale > 0, "config: penalty_scale must be positive");
    }
};

struct IterationRecord {
    double fit_loss = 0.0;     // sum 1/2 ||X - U S V^T||^2
    double causal_loss = 0.0;  // sum (1/2I_k) ||T - TW - sum M T A||^2
    double objective = 0.0;    // fit + causal + l1
    double h = 0.0;
    double gap_u_tilde = 0.0;
    double gap_u_hat = 0.0;
    double gap_s = 0.0;
    int u_sweeps = 0;
    int s_sweeps = 0;
    int causal_iterations = 0;
    int u_monotone_violations = 0;
    int s_monotone_violations = 0;
};

struct FitReport {
    std::vector<IterationRecord> trace;
    int iterations = 0;
    double wall_seconds = 0.0;
    std::string termination;
    std::vector<std::string> warnings;
    bool causal_converged = false;
    std::vector<Matrix> U_hat;  // projected Q_k H at termination
    // inner-sweep totals and sweeps whose block Lagrangian increased
    int u_sweeps = 0;
    int s_sweeps = 0;
    int u_monotone_violations = 0;
    int s_monotone_violations = 0;
};

struct FitResult {
    Parafac2Factors factors;
    CausalGraph graph;
    FitReport report;
};

namespace detail {

inline void check_input(const IrregularTensor& x, const SolverConfig& cfg) {
    cfg.validate();
    detail::require_arg(x.size() >= 1, "fit: empty tensor");
    for (std::size_t k = 0; k < x.size(); ++k) {
        detail::require_arg(x[k].rows() >= cfg.rank, "fit: slice " + std::to_string(k) + " has " +
                                                         std::to_string(x[k].rows()) + " visits, fewer than rank " +
                                                         std::to_string(cfg.rank));
        if (!x[k].allFinite()) throw NumericError("fit: slice " + std::to_string(k) + " has non-finite entries");
    }
    bool usable = false;
    for (std::size_t k = 0; k < x.size(); ++k) usable |= x[k].rows() > cfg.lags;
    detail::require_arg(usable, "fit: lag order " + std::to_string(cfg.lags) + " is not below any slice length");
    if (cfg.warm_start_V)
        detail::require_dims(cfg.warm_start_V->rows() == x.features() && cfg.warm_start_V->cols() == cfg.rank,
                             "fit: warm-start V has shape " + shape_str(*cfg.warm_start_V));
}

/// Random start: U_k and V uniform on [0, 1), S_k = I; (Q_k, H) from a
/// first Procrustes projection of U_k.
inline Parafac2Factors init_factors(const IrregularTensor& x, const SolverConfig& cfg) {
    Rng rng(cfg.seed);
    Parafac2Factors f;
    f.V = cfg.warm_start_V ? *cfg.warm_start_V : detail::uniform_matrix(rng, x.features(), cfg.rank, 0.0, 1.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
        f.U.push_back(detail::uniform_matrix(rng, x[k].rows(), cfg.rank, 0.0, 1.0));
        f.S.push_back(Vector::Ones(cfg.rank));
        f.Q.push_back(procrustes_q(f.U.back()).Q);
    }
    std::vector<Matrix> zeros;
    for (const auto& u : f.U) zeros.push_back(Matrix::Zero(u.rows(), u.cols()));
    f.H = update_H(f.Q, f.U, zeros, std::vector<double>(f.U.size(), 1.0));
    return f;
}

inline CausalGraph init_graph(const SolverConfig& cfg) {
    CausalGraph g = CausalGraph::zeros(cfg.rank, cfg.lags);
    if (cfg.graph_init == GraphInit::identity) g.W = Matrix::Identity(cfg.rank, cfg.rank);
    return g;
}

/// Flip V columns (and the matching S_k entries) so every V column has a
/// non-negative sum; the graph is conjugated by the same signs so that
/// U S V^T, the causal residual and the objective are unchanged.
inline void canonicalize_signs(Parafac2Factors& f, CausalGraph& g) {
    const Index r = f.V.cols();
    Vector d = Vector::Ones(r);
    for (Index c = 0; c < r; ++c)
        if (f.V.col(c).sum() < 0.0) d(c) = -1.0;
    if ((d.array() > 0).all()) return;
    f.V = f.V * d.asDiagonal();
    for (auto& s : f.S) s = s.cwiseProduct(d);
    g.W = d.asDiagonal() * g.W * d.asDiagonal();
    for (auto& a : g.A) a = d.asDiagonal() * a * d.asDiagonal();
}

inline double relative_change(double prev, double now) {
    return std::abs(prev - now) / std::max(std::abs(prev), std::numeric_limits<double>::min());
}

/// One tensor sweep: penalties, U block, penalties, S block, V.
inline void tensor_sweep(const IrregularTensor& x, Parafac2Factors& f, const CausalGraph& g, TensorAdmmState& st,
                         const BlockOptions& opt, IterationRecord& rec, FitReport& report) {
    if (refresh_penalties(f, st, true, false, opt.penalty_scale, opt.penalty_rule) > 0)
        report.warnings.push_back("penalty floor applied in U block at outer iteration " +
                                  std::to_string(report.iterations + 1));
    const BlockTrace ut = run_u_block(x, f, g, st, opt);
    if (refresh_penalties(f, st, false, true, opt.penalty_scale, opt.penalty_rule) > 0)
        report.warnings.push_back("penalty floor applied in S block at outer iteration " +
                                  std::to_string(report.iterations + 1));
    const BlockTrace stt = run_s_block(x, f, g, st, opt);
    f.V = update_V(x, f.U, f.S);
    rec.u_sweeps = ut.sweeps;
    rec.s_sweeps = stt.sweeps;
    rec.gap_u_tilde = ut.gap_tilde;
    rec.gap_u_hat = ut.gap_hat;
    rec.gap_s = stt.gap_tilde;
    rec.u_monotone_violations = ut.monotone_violations;
    rec.s_monotone_violations = stt.monotone_violations;
    report.u_monotone_violations += ut.monotone_violations;
    report.s_monotone_violations += stt.monotone_violations;
    report.u_sweeps += ut.sweeps;
    report.s_sweeps += stt.sweeps;
    if (ut.degenerate_procrustes > 0)
        report.warnings.push_back("degenerate Procrustes input in " + std::to_string(ut.degenerate_procrustes) +
                                  " slice updates");
}

inline CausalOptions causal_options(const SolverConfig& cfg) {
    CausalOptions o = cfg.causal;
    o.lambda_w = cfg.lambda_w;
    o.lambda_a = cfg.lambda_a;
    return o;
}

/// Repeated outer loop shared by the joint and unregularised paths.
inline bool outer_converged(const FitReport& report, const SolverConfig& cfg, int& streak) {
    const auto& tr = report.trace;
    if (tr.size() < 2) return false;
    const double change = relative_change(tr[tr.size() - 2].objective, tr.back().objective);
    streak = change < cfg.outer_tol ? streak + 1 : 0;
    return streak >= cfg.outer_patience;
}

/// One summary warning per block whose augmented Lagrangian rose in some sweep.
/// Descent is only guaranteed for the lipschitz penalty rule, and not in the
/// causally regularised U block, so these are informational.
inline void monotonicity_warnings(FitReport& report, PenaltyRule rule, double penalty_scale) {
    auto note = [&](const char* block, int bad, int total) {
        if (bad == 0) return;
        report.warnings.push_back(std::string(block) + " block augmented Lagrangian increased in " +
                                  std::to_string(bad) + " of " + std::to_string(total) + " sweeps (penalty rule " +
                                  (rule == PenaltyRule::lipschitz ? "lipschitz" : "trace") + ", scale " +
                                  std::to_string(penalty_scale) + ")");
    };
    note("U", report.u_monotone_violations, report.u_sweeps);
    note("S", report.s_monotone_violations, report.s_sweeps);
}

inline void check_finite(double v, FitReport& report, const char* what) {
    if (!std::isfinite(v)) {
        report.termination = std::string("non-finite ") + what;
        throw NumericError(std::string("fit: non-finite ") + what + " at outer iteration " +
                           std::to_string(report.iterations));
    }
}

}  // namespace detail

/// Thrown when the fit diverges; carries the trace up to the failure.
class FitDiverged : public NumericError {
public:
    FitDiverged(const std::string& what, FitReport partial) : NumericError(what), report(std::move(partial)) {}
    FitReport report;
};

/// Unregularised PARAFAC2 (tensor blocks only, causal term disabled).
inline FitResult fit_parafac2(const IrregularTensor& x, const SolverConfig& cfg) {
    detail::check_input(x, cfg);
    const auto start = std::chrono::steady_clock::now();
    FitResult res;
    res.factors = detail::init_factors(x, cfg);
    res.graph = CausalGraph::zeros(cfg.rank, cfg.lags);
    TensorAdmmState st = TensorAdmmState::from_factors(res.factors);
    BlockOptions opt = cfg.block;
    opt.causal_regularization = false;
    int streak = 0;
    res.report.termination = "max_iterations";
    try {
        for (int it = 0; it < cfg.outer_max; ++it) {
            IterationRecord rec;
            detail::tensor_sweep(x, res.factors, res.graph, st, opt, rec, res.report);
            rec.fit_loss = fit_loss(x, res.factors);
            rec.objective = rec.fit_loss;
            res.report.trace.push_back(rec);
            ++res.report.iterations;
            detail::check_finite(rec.objective, res.report, "objective");
            if (detail::outer_converged(res.report, cfg, streak)) {
                res.report.termination = "converged";
                break;
            }
        }
    } catch (const NumericError& e) {
        res.report.termination = "diverged";
        throw FitDiverged(e.what(), res.report);
    }
    res.report.U_hat = st.U_hat;
    detail::monotonicity_warnings(res.report, cfg.block.penalty_rule, cfg.block.penalty_scale);
    detail::canonicalize_signs(res.factors, res.graph);
    res.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

/// Best-of-n unregularised V (lowest fit loss), entries with |v| below
/// threshold * max|column| zeroed.
inline Matrix warm_start_v(const IrregularTensor& x, const SolverConfig& cfg, int n_runs,
                           std::vector<double>* run_losses = nullptr) {
    detail::require_arg(n_runs >= 1, "warm_start_v: need at least one run");
    Matrix best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_runs; ++i) {
        SolverConfig c = cfg;
        c.warm_start_V.reset();
        c.seed = cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1);
        const FitResult r = fit_parafac2(x, c);
        const double loss = fit_loss(x, r.factors);
        if (run_losses) run_losses->push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best = r.factors.V;
        }
    }
    for (Index c = 0; c < best.cols(); ++c) {
        const double cut = cfg.warm_start_threshold * best.col(c).cwiseAbs().maxCoeff();
        for (Index j = 0; j < best.rows(); ++j)
            if (std::abs(best(j, c)) < cut) best(j, c) = 0.0;
    }
    return best;
}

/// Joint fit: per outer iteration U block, S block, V, causal block.
inline FitResult fit(const IrregularTensor& x, const SolverConfig& cfg_in) {
    SolverConfig cfg = cfg_in;
    if (!cfg.warm_start_V && cfg.warm_start_runs > 0) cfg.warm_start_V = warm_start_v(x, cfg, cfg.warm_start_runs);
    detail::check_input(x, cfg);
    const auto start = std::chrono::steady_clock::now();
    FitResult res;
    res.factors = detail::init_factors(x, cfg);
    res.graph = detail::init_graph(cfg);
    TensorAdmmState st = TensorAdmmState::from_factors(res.factors);
    const CausalOptions copt = detail::causal_options(cfg);
    int streak = 0;
    res.report.termination = "max_iterations";
    try {
        for (int it = 0; it < cfg.outer_max; ++it) {
            IterationRecord rec;
            detail::tensor_sweep(x, res.factors, res.graph, st, cfg.block, rec, res.report);

            const TrajectorySet traj = trajectories(res.factors);
            CausalAdmmState cst = CausalAdmmState::init(0, res.graph, copt);
            const CausalTrace ct = run_causal_block(traj, res.graph, cst, copt);
            res.report.causal_converged = ct.converged;
            if (ct.line_search_failures > 0)
                res.report.warnings.push_back("global W line search stalled " + std::to_string(ct.line_search_failures) +
                                              " times at outer iteration " + std::to_string(it + 1));
            if (ct.rho_capped)
                res.report.warnings.push_back("causal penalties reached the cap at outer iteration " +
                                              std::to_string(it + 1));

            rec.causal_iterations = ct.iterations;
            rec.h = ct.h;
            rec.fit_loss = fit_loss(x, res.factors);
            rec.causal_loss = causal_loss(traj, res.graph);
            rec.objective = rec.fit_loss + rec.causal_loss + l1_penalty(res.graph, cfg.lambda_w, cfg.lambda_a);
            if (!res.report.trace.empty()) {
                const double prev = res.report.trace.back().objective;
                if (rec.objective > prev + 1e-6 * std::abs(prev))
                    res.report.warnings.push_back("joint objective increased at outer iteration " +
                                                  std::to_string(it + 1));
            }
            res.report.trace.push_back(rec);
            ++res.report.iterations;
            detail::check_finite(rec.objective, res.report, "objective");
            if (detail::outer_converged(res.report, cfg, streak)) {
                res.report.termination = "converged";
                break;
            }
        }
    } catch (const NumericError& e) {
        res.report.termination = "diverged";
        throw FitDiverged(e.what(), res.report);
    }
    res.report.U_hat = st.U_hat;
    detail::monotonicity_warnings(res.report, cfg.block.penalty_rule, cfg.block.penalty_scale);
    detail::canonicalize_signs(res.factors, res.graph);
    res.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

/// Baseline: unregularised decomposition, then one causal-block solve on
/// trajectories truncated to the shortest slice.
inline FitResult fit_two_step(const IrregularTensor& x, const SolverConfig& cfg_in) {
    SolverConfig cfg = cfg_in;
    if (!cfg.warm_start_V && cfg.warm_start_runs > 0) cfg.warm_start_V = warm_start_v(x, cfg, cfg.warm_start_runs);
    FitResult res = fit_parafac2(x, cfg);
    const auto start = std::chrono::steady_clock::now();
    const Index shortest = x.min_visits();
    detail::require_arg(shortest > cfg.lags, "fit_two_step: shortest slice is not longer than the lag order");
    TrajectorySet traj;
    for (const auto& t : trajectories(res.factors)) traj.push_back(t.topRows(shortest));
    res.graph = detail::init_graph(cfg);
    const CausalOptions copt = detail::causal_options(cfg);
    CausalAdmmState cst = CausalAdmmState::init(0, res.graph, copt);
    const CausalTrace ct = run_causal_block(traj, res.graph, cst, copt);
    res.report.causal_converged = ct.converged;
    IterationRecord& last = res.report.trace.back();
    last.causal_iterations = ct.iterations;
    last.h = ct.h;
    last.causal_loss = causal_loss(trajectories(res.factors), res.graph);
    last.objective = last.fit_loss + last.causal_loss + l1_penalty(res.graph, cfg.lambda_w, cfg.lambda_a);
    res.report.wall_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

inline FitResult run(const IrregularTensor& x, const SolverConfig& cfg) {
    return cfg.mode == FitMode::joint ? fit(x, cfg) : fit_two_step(x, cfg);
}

}  // namespace carted
