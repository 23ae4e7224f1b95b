// carted: simulate | fit | eval | summarize-cpn

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "carted/carted.hpp"

namespace fs = std::filesystem;
using carted::io::json;

namespace {

int exit_code(const carted::Error& e) {
    const std::string c = e.code();
    if (c == "argument") return 2;
    if (c == "dimension") return 3;
    if (c == "numeric") return 4;
    if (c == "io") return 5;
    return 1;
}

std::string one_line(std::string s) {
    for (char& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.json" : p; }

carted::io::RunConfig load_config(const std::string& path) {
    if (path.empty()) return carted::io::config_from_json(json::object());
    return carted::io::read_config(path);
}

struct Options {
    std::string config;
    std::string out;
    std::string mode;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau_w;
    std::optional<double> tau_a;
    std::string manifest;
    std::string run_dir;
    std::string truth;
    std::string graph_dir;
    std::string labels;
};

int cmd_simulate(const Options& o) {
    carted::io::RunConfig cfg = load_config(o.config);
    if (o.seed) cfg.synthetic.seed = *o.seed;
    const carted::GroundTruth gt = carted::assemble_instance(cfg.synthetic);
    const fs::path out(o.out);
    carted::io::write_dataset(out, gt, cfg.labels);
    carted::io::write_json(out / "config.json", carted::io::to_json(cfg));
    std::cout << "wrote " << gt.tensor.size() << " slices (J=" << gt.tensor.features() << ") to " << out.string()
              << "\n";
    return 0;
}

json summary_json(const carted::FitResult& r, const carted::SolverConfig& cfg, const carted::IrregularTensor& x) {
    json s;
    s["mode"] = carted::to_string(cfg.mode);
    s["iterations"] = r.report.iterations;
    s["termination"] = r.report.termination;
    s["causal_converged"] = r.report.causal_converged;
    s["warnings"] = r.report.warnings;
    if (!r.report.trace.empty()) {
        const auto& t = r.report.trace.back();
        s["fit_loss"] = t.fit_loss;
        s["causal_loss"] = t.causal_loss;
        s["objective"] = t.objective;
        s["h"] = t.h;
    }
    double q_err = 0.0;
    for (const auto& q : r.factors.Q)
        q_err = std::max(q_err, (q.transpose() * q - carted::Matrix::Identity(q.cols(), q.cols())).norm());
    s["max_orthonormality_error"] = q_err;
    s["slices"] = x.size();
    return s;
}

void write_run(const fs::path& out, const carted::FitResult& r, const carted::io::RunConfig& cfg,
               const carted::IrregularTensor& x) {
    carted::io::write_factors(out / "factors", r.factors);
    for (std::size_t k = 0; k < r.report.U_hat.size(); ++k)
        carted::io::write_matrix(out / "factors" / "U_hat" / ("U_hat_" + carted::io::slice_name(k) + ".csv"),
                                 r.report.U_hat[k]);
    carted::io::write_graph(out / "graph", r.graph);
    carted::io::write_atomic(out / "trace.csv", carted::io::trace_csv(r.report));
    carted::io::write_json(out / "summary.json", summary_json(r, cfg.solver, x));
    carted::io::write_json(out / "timing.json", json{{"wall_seconds", r.report.wall_seconds}});
}

int cmd_fit(const Options& o) {
    carted::io::RunConfig cfg = load_config(o.config);
    if (o.seed) cfg.solver.seed = *o.seed;
    if (!o.mode.empty()) {
        if (o.mode == "joint") cfg.solver.mode = carted::FitMode::joint;
        else if (o.mode == "two-step") cfg.solver.mode = carted::FitMode::two_step;
        else throw carted::ArgumentError("--mode must be joint or two-step, got '" + o.mode + "'");
    }
    if (o.tau_w) cfg.solver.tau_w = *o.tau_w;
    if (o.tau_a) cfg.solver.tau_a = *o.tau_a;
    cfg.solver.validate();
    const fs::path mpath = manifest_path(o.manifest);
    const carted::io::DatasetManifest m = carted::io::read_manifest(mpath);
    const carted::IrregularTensor x = carted::io::load_tensor(m, mpath.parent_path());
    const fs::path out(o.out);
    carted::io::write_json(out / "config.json", carted::io::to_json(cfg));
    try {
        const carted::FitResult r = carted::run(x, cfg.solver);
        write_run(out, r, cfg, x);
        std::cout << "fit " << carted::to_string(cfg.solver.mode) << ": " << r.report.iterations << " iterations, "
                  << r.report.termination << ", objective " << carted::io::format_double(r.report.trace.back().objective)
                  << "\n";
    } catch (const carted::FitDiverged& e) {
        carted::io::write_atomic(out / "trace.csv", carted::io::trace_csv(e.report));
        throw;
    }
    return 0;
}

int cmd_eval(const Options& o) {
    const fs::path run(o.run_dir);
    const fs::path mpath = manifest_path(o.truth);
    const carted::io::DatasetManifest m = carted::io::read_manifest(mpath);
    const carted::io::TruthBundle truth = carted::io::read_truth(m, mpath.parent_path());
    double tau_w = 0.3;
    double tau_a = 0.1;
    if (fs::exists(run / "config.json")) {
        const carted::io::RunConfig cfg = carted::io::read_config(run / "config.json");
        tau_w = cfg.solver.tau_w;
        tau_a = cfg.solver.tau_a;
    }
    if (o.tau_w) tau_w = *o.tau_w;
    if (o.tau_a) tau_a = *o.tau_a;
    const carted::Parafac2Factors est = carted::io::read_factors(run / "factors", m.K);
    const carted::CausalGraph g = carted::io::read_graph(run / "graph");
    if (est.V.rows() != truth.factors.V.rows() || est.V.cols() != truth.factors.V.cols())
        throw carted::DimensionError("eval: estimated V is " + carted::shape_str(est.V) + ", truth is " +
                                     carted::shape_str(truth.factors.V));
    if (g.lags() != truth.graph.lags())
        throw carted::DimensionError("eval: estimated lag order " + std::to_string(g.lags()) + ", truth has " +
                                     std::to_string(truth.graph.lags()));
    const carted::MetricsReport rep = carted::evaluate(est, g, truth.factors.V, truth.factors.H, truth.trajectories,
                                                       truth.graph, tau_w, tau_a);
    auto scores = [](const carted::GraphScores& s) {
        return json{{"shd", s.shd}, {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"tpr", s.tpr}, {"fdr", s.fdr},
                    {"tpr_undefined", s.tpr_undefined}, {"fdr_undefined", s.fdr_undefined}};
    };
    json j{{"sim", rep.sim},         {"cpi", rep.cpi},          {"rr", rep.rr},
           {"cpi_raw", rep.cpi_raw}, {"rr_raw", rep.rr_raw},    {"component_match", rep.perm},
           {"tau_w", tau_w},         {"tau_a", tau_a},          {"W", scores(rep.w)},
           {"A", scores(rep.a)}};
    const fs::path out = o.out.empty() ? run / "metrics.json" : fs::path(o.out);
    carted::io::write_json(out, j);
    using carted::io::format_double;
    std::cout << "metric,value\n"
              << "sim," << format_double(rep.sim) << "\ncpi," << format_double(rep.cpi) << "\nrr,"
              << format_double(rep.rr) << "\nshd_w," << rep.w.shd << "\ntpr_w," << format_double(rep.w.tpr)
              << "\nfdr_w," << format_double(rep.w.fdr) << "\nshd_a," << rep.a.shd << "\ntpr_a,"
              << format_double(rep.a.tpr) << "\nfdr_a," << format_double(rep.a.fdr) << "\n";
    return 0;
}

std::vector<std::string> split_labels(const std::string& s) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

int cmd_cpn(const Options& o) {
    const fs::path dir(o.graph_dir);
    const carted::CausalGraph g = carted::io::read_graph(dir);
    const carted::CpnSummary s =
        carted::summarize_cpn(g.W, g.A, o.tau_w.value_or(0.03), o.tau_a.value_or(0.03), split_labels(o.labels));
    json j;
    j["labels"] = s.labels;
    j["intra"] = json::array();
    j["temporal"] = json::array();
    std::cout << "kind,from,to,lag,weight\n";
    for (const auto& e : s.intra) {
        j["intra"].push_back({{"from", s.labels[e.from]}, {"to", s.labels[e.to]}, {"weight", e.weight}});
        std::cout << "intra," << s.labels[e.from] << "," << s.labels[e.to] << ",0,"
                  << carted::io::format_double(e.weight) << "\n";
    }
    for (const auto& e : s.temporal) {
        j["temporal"].push_back(
            {{"from", s.labels[e.from]}, {"to", s.labels[e.to]}, {"lag", e.lag}, {"weight", e.weight}});
        std::cout << "temporal," << s.labels[e.from] << "," << s.labels[e.to] << "," << e.lag << ","
                  << carted::io::format_double(e.weight) << "\n";
    }
    if (!o.out.empty()) carted::io::write_json(o.out, j);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint PARAFAC2 decomposition and temporal causal discovery"};
    app.require_subcommand(1);
    Options o;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset with ground truth");
    sim->add_option("--config", o.config, "JSON config (synthetic section)");
    sim->add_option("--out", o.out, "output directory")->required();
    sim->add_option("--seed", o.seed, "override synthetic.seed");

    auto* fit = app.add_subcommand("fit", "fit factors and causal graph");
    fit->add_option("manifest", o.manifest, "dataset manifest or dataset directory")->required();
    fit->add_option("--config", o.config, "JSON config (solver and causal sections)");
    fit->add_option("--out", o.out, "run directory")->required();
    fit->add_option("--mode", o.mode, "joint or two-step");
    fit->add_option("--seed", o.seed, "override solver.seed");
    fit->add_option("--threshold-w", o.tau_w, "W threshold recorded with the run");
    fit->add_option("--threshold-a", o.tau_a, "A threshold recorded with the run");

    auto* ev = app.add_subcommand("eval", "score a run against ground truth");
    ev->add_option("run_dir", o.run_dir, "run directory written by fit")->required();
    ev->add_option("truth", o.truth, "dataset manifest or directory with a truth section")->required();
    ev->add_option("--out", o.out, "metrics JSON path (default <run_dir>/metrics.json)");
    ev->add_option("--threshold-w", o.tau_w, "W threshold (default from the run config)");
    ev->add_option("--threshold-a", o.tau_a, "A threshold (default from the run config)");

    auto* cpn = app.add_subcommand("summarize-cpn", "causal phenotype network from a graph directory");
    cpn->add_option("graph_dir", o.graph_dir, "directory holding graph.json")->required();
    cpn->add_option("--threshold-w", o.tau_w, "W threshold (default 0.03)");
    cpn->add_option("--threshold-a", o.tau_a, "A threshold (default 0.03)");
    cpn->add_option("--labels", o.labels, "comma-separated node labels");
    cpn->add_option("--out", o.out, "summary JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: argument: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (*sim) return cmd_simulate(o);
        if (*fit) return cmd_fit(o);
        if (*ev) return cmd_eval(o);
        if (*cpn) return cmd_cpn(o);
    } catch (const carted::Error& e) {
        std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << "\n";
        return exit_code(e);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: io: " << one_line(e.what()) << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 1;
}
