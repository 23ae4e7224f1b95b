#pragma once

// On-disk formats. Slices are bare comma-delimited rows; every other matrix
// carries a one-line "rows,cols" header. Numbers use shortest round-trip
// formatting, so a write/read cycle reproduces every double exactly.
// Manifests, configs and summaries are JSON.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "carted/errors.hpp"
#include "carted/linalg.hpp"
#include "carted/solver.hpp"
#include "carted/synthetic.hpp"
#include "carted/tensor.hpp"

namespace carted::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw IoError("cannot format number");
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError(where + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

/// Writes to a sibling temporary file, then renames over the target.
inline void write_atomic(const fs::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail {

inline std::string rows_to_csv(const Matrix& m) {
    std::string out;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::vector<std::string_view> lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        std::string_view l = text.substr(start, pos - start);
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
        if (!l.empty()) out.push_back(l);
        start = pos + 1;
    }
    return out;
}

inline Matrix parse_rows(const std::vector<std::string_view>& ls, std::size_t first, Index cols_hint,
                         const std::string& where) {
    const Index rows = static_cast<Index>(ls.size() - first);
    Index cols = cols_hint;
    if (cols < 0) cols = rows > 0 ? static_cast<Index>(split(ls[first], ',').size()) : 0;
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto cells = split(ls[first + static_cast<std::size_t>(i)], ',');
        if (static_cast<Index>(cells.size()) != cols)
            throw IoError(where + ": row " + std::to_string(i + 1) + " has " + std::to_string(cells.size()) +
                          " fields, expected " + std::to_string(cols));
        for (Index j = 0; j < cols; ++j) m(i, j) = parse_double(cells[static_cast<std::size_t>(j)], where);
    }
    return m;
}

}  // namespace detail

/// Slice file: one row per visit, J comma-separated values, no header.
inline void write_slice(const fs::path& path, const Matrix& x) { write_atomic(path, detail::rows_to_csv(x)); }

inline Matrix read_slice(const fs::path& path) {
    const std::string text = read_file(path);
    return detail::parse_rows(detail::lines(text), 0, -1, path.string());
}

/// Matrix file: "rows,cols" on the first line, then the rows.
inline void write_matrix(const fs::path& path, const Matrix& m) {
    write_atomic(path, std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "\n" + detail::rows_to_csv(m));
}

inline Matrix read_matrix(const fs::path& path) {
    const std::string text = read_file(path);
    const auto ls = detail::lines(text);
    if (ls.empty()) throw IoError(path.string() + ": missing shape header");
    const auto head = detail::split(ls[0], ',');
    if (head.size() != 2) throw IoError(path.string() + ": malformed shape header '" + std::string(ls[0]) + "'");
    const double r = parse_double(head[0], path.string());
    const double c = parse_double(head[1], path.string());
    if (r < 0 || c < 0 || r != static_cast<Index>(r) || c != static_cast<Index>(c))
        throw IoError(path.string() + ": malformed shape header");
    const Index rows = static_cast<Index>(r);
    const Index cols = static_cast<Index>(c);
    if (static_cast<Index>(ls.size()) - 1 != rows && !(rows == 0 || cols == 0))
        throw IoError(path.string() + ": header declares " + std::to_string(rows) + " rows, found " +
                      std::to_string(ls.size() - 1));
    if (rows == 0 || cols == 0) return Matrix(rows, cols);
    return detail::parse_rows(ls, 1, cols, path.string());
}

inline Matrix read_matrix_checked(const fs::path& path, Index rows, Index cols) {
    Matrix m = read_matrix(path);
    if (m.rows() != rows || m.cols() != cols)
        throw DimensionError(path.string() + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                             ", found " + shape_str(m));
    return m;
}

inline void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

inline std::string slice_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05zu", k);
    return buf;
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct SliceRecord {
    std::size_t id = 0;
    Index visits = 0;
    std::string path;
};

struct TruthPaths {
    std::string W;
    std::vector<std::string> A;
    std::string V;
    std::string H;
    std::vector<std::string> trajectories;
    std::vector<std::string> U;
    std::string S;
};

struct DatasetManifest {
    int format_version = kFormatVersion;
    std::size_t K = 0;
    Index J = 0;
    std::vector<SliceRecord> slices;
    std::vector<std::string> feature_labels;
    std::optional<TruthPaths> truth;
};

inline json to_json(const DatasetManifest& m) {
    json j;
    j["format_version"] = m.format_version;
    j["K"] = m.K;
    j["J"] = m.J;
    j["slices"] = json::array();
    for (const auto& s : m.slices) j["slices"].push_back({{"id", s.id}, {"visits", s.visits}, {"path", s.path}});
    if (!m.feature_labels.empty()) j["feature_labels"] = m.feature_labels;
    if (m.truth) {
        const auto& t = *m.truth;
        j["truth"] = {{"W", t.W}, {"A", t.A}, {"V", t.V}, {"H", t.H}, {"trajectories", t.trajectories}, {"U", t.U},
                      {"S", t.S}};
    }
    return j;
}

inline DatasetManifest manifest_from_json(const json& j) {
    try {
        DatasetManifest m;
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != kFormatVersion)
            throw IoError("manifest: unsupported format version " + std::to_string(m.format_version));
        m.K = j.at("K").get<std::size_t>();
        m.J = j.at("J").get<Index>();
        for (const auto& s : j.at("slices"))
            m.slices.push_back({s.at("id").get<std::size_t>(), s.at("visits").get<Index>(), s.at("path").get<std::string>()});
        if (m.slices.size() != m.K)
            throw IoError("manifest: K = " + std::to_string(m.K) + " but " + std::to_string(m.slices.size()) +
                          " slice records");
        if (j.contains("feature_labels")) m.feature_labels = j["feature_labels"].get<std::vector<std::string>>();
        if (j.contains("truth")) {
            const auto& t = j["truth"];
            TruthPaths tp;
            tp.W = t.at("W").get<std::string>();
            tp.A = t.at("A").get<std::vector<std::string>>();
            tp.V = t.at("V").get<std::string>();
            tp.H = t.at("H").get<std::string>();
            tp.trajectories = t.at("trajectories").get<std::vector<std::string>>();
            tp.U = t.value("U", std::vector<std::string>{});
            tp.S = t.value("S", std::string{});
            m.truth = tp;
        }
        return m;
    } catch (const json::exception& e) {
        throw IoError(std::string("manifest: ") + e.what());
    }
}

inline DatasetManifest read_manifest(const fs::path& path) { return manifest_from_json(read_json(path)); }

/// Loads every slice and checks it against its declared shape.
inline IrregularTensor load_tensor(const DatasetManifest& m, const fs::path& root) {
    std::vector<Matrix> slices;
    slices.reserve(m.slices.size());
    for (const auto& rec : m.slices) {
        Matrix x = read_slice(root / rec.path);
        if (x.rows() != rec.visits || x.cols() != m.J)
            throw DimensionError(rec.path + ": expected " + std::to_string(rec.visits) + "x" + std::to_string(m.J) +
                                 ", found " + shape_str(x));
        slices.push_back(std::move(x));
    }
    return IrregularTensor(std::move(slices));
}

// ---------------------------------------------------------------------------
// Factors, graphs, ground truth
// ---------------------------------------------------------------------------

/// S_k stacked as the rows of a K x R matrix.
inline Matrix stack_S(const std::vector<Vector>& s) {
    if (s.empty()) return Matrix(0, 0);
    Matrix out(static_cast<Index>(s.size()), s.front().size());
    for (std::size_t k = 0; k < s.size(); ++k) out.row(static_cast<Index>(k)) = s[k].transpose();
    return out;
}

inline std::vector<Vector> unstack_S(const Matrix& m) {
    std::vector<Vector> out;
    for (Index k = 0; k < m.rows(); ++k) out.push_back(m.row(k).transpose());
    return out;
}

inline void write_graph(const fs::path& dir, const CausalGraph& g) {
    write_matrix(dir / "W.csv", g.W);
    json idx;
    idx["lags"] = g.lags();
    idx["nodes"] = g.nodes();
    idx["W"] = "W.csv";
    idx["A"] = json::array();
    for (std::size_t p = 0; p < g.A.size(); ++p) {
        const std::string name = "A_" + std::to_string(p + 1) + ".csv";
        write_matrix(dir / name, g.A[p]);
        idx["A"].push_back({{"lag", p + 1}, {"path", name}});
    }
    write_json(dir / "graph.json", idx);
}

inline CausalGraph read_graph(const fs::path& dir) {
    const json idx = read_json(dir / "graph.json");
    try {
        const Index nodes = idx.at("nodes").get<Index>();
        const Index lags = idx.at("lags").get<Index>();
        CausalGraph g;
        g.W = read_matrix_checked(dir / idx.at("W").get<std::string>(), nodes, nodes);
        g.A.resize(static_cast<std::size_t>(lags));
        std::vector<char> seen(static_cast<std::size_t>(lags), 0);
        for (const auto& e : idx.at("A")) {
            const Index lag = e.at("lag").get<Index>();
            if (lag < 1 || lag > lags || seen[static_cast<std::size_t>(lag - 1)])
                throw IoError((dir / "graph.json").string() + ": bad lag index " + std::to_string(lag));
            seen[static_cast<std::size_t>(lag - 1)] = 1;
            g.A[static_cast<std::size_t>(lag - 1)] = read_matrix_checked(dir / e.at("path").get<std::string>(), nodes, nodes);
        }
        for (Index p = 0; p < lags; ++p)
            if (!seen[static_cast<std::size_t>(p)]) throw IoError((dir / "graph.json").string() + ": lag " +
                                                                   std::to_string(p + 1) + " missing");
        return g;
    } catch (const json::exception& e) {
        throw IoError((dir / "graph.json").string() + ": " + e.what());
    }
}

inline void write_factors(const fs::path& dir, const Parafac2Factors& f) {
    write_matrix(dir / "V.csv", f.V);
    write_matrix(dir / "H.csv", f.H);
    write_matrix(dir / "S.csv", stack_S(f.S));
    for (std::size_t k = 0; k < f.U.size(); ++k) {
        write_matrix(dir / "U" / ("U_" + slice_name(k) + ".csv"), f.U[k]);
        if (k < f.Q.size()) write_matrix(dir / "Q" / ("Q_" + slice_name(k) + ".csv"), f.Q[k]);
    }
}

inline Parafac2Factors read_factors(const fs::path& dir, std::size_t slices) {
    Parafac2Factors f;
    f.V = read_matrix(dir / "V.csv");
    f.H = read_matrix(dir / "H.csv");
    const Matrix s = read_matrix(dir / "S.csv");
    if (static_cast<std::size_t>(s.rows()) != slices)
        throw DimensionError((dir / "S.csv").string() + ": expected " + std::to_string(slices) + " rows");
    f.S = unstack_S(s);
    for (std::size_t k = 0; k < slices; ++k) {
        f.U.push_back(read_matrix(dir / "U" / ("U_" + slice_name(k) + ".csv")));
        const fs::path q = dir / "Q" / ("Q_" + slice_name(k) + ".csv");
        if (fs::exists(q)) f.Q.push_back(read_matrix(q));
    }
    check_factors(f);
    return f;
}

inline std::string trace_csv(const FitReport& r) {
    std::string out =
        "iteration,fit_loss,causal_loss,objective,h,gap_u_tilde,gap_u_hat,gap_s,u_sweeps,s_sweeps,causal_iterations\n";
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        const auto& t = r.trace[i];
        out += std::to_string(i + 1) + "," + format_double(t.fit_loss) + "," + format_double(t.causal_loss) + "," +
               format_double(t.objective) + "," + format_double(t.h) + "," + format_double(t.gap_u_tilde) + "," +
               format_double(t.gap_u_hat) + "," + format_double(t.gap_s) + "," + std::to_string(t.u_sweeps) + "," +
               std::to_string(t.s_sweeps) + "," + std::to_string(t.causal_iterations) + "\n";
    }
    return out;
}

/// The objective column of a trace file.
inline std::vector<double> read_trace_objective(const fs::path& path) {
    const std::string text = read_file(path);
    const auto ls = detail::lines(text);
    std::vector<double> out;
    for (std::size_t i = 1; i < ls.size(); ++i) {
        const auto cells = detail::split(ls[i], ',');
        if (cells.size() < 4) throw IoError(path.string() + ": short trace row");
        out.push_back(parse_double(cells[3], path.string()));
    }
    return out;
}

struct TruthBundle {
    Parafac2Factors factors;
    CausalGraph graph;
    TrajectorySet trajectories;
};

/// Writes slices, truth files and the manifest under dir.
inline DatasetManifest write_dataset(const fs::path& dir, const GroundTruth& gt,
                                     const std::vector<std::string>& feature_labels = {}) {
    DatasetManifest m;
    m.K = gt.tensor.size();
    m.J = gt.tensor.features();
    m.feature_labels = feature_labels;
    TruthPaths tp;
    for (std::size_t k = 0; k < gt.tensor.size(); ++k) {
        const std::string rel = "slices/slice_" + slice_name(k) + ".csv";
        write_slice(dir / rel, gt.tensor[k]);
        m.slices.push_back({k, gt.tensor[k].rows(), rel});
        const std::string trel = "truth/T/T_" + slice_name(k) + ".csv";
        write_matrix(dir / trel, gt.trajectories[k]);
        tp.trajectories.push_back(trel);
        const std::string urel = "truth/U/U_" + slice_name(k) + ".csv";
        write_matrix(dir / urel, gt.factors.U[k]);
        tp.U.push_back(urel);
    }
    write_graph(dir / "truth", gt.graph);
    tp.W = "truth/W.csv";
    for (std::size_t p = 0; p < gt.graph.A.size(); ++p) tp.A.push_back("truth/A_" + std::to_string(p + 1) + ".csv");
    write_matrix(dir / "truth/V.csv", gt.factors.V);
    write_matrix(dir / "truth/H.csv", gt.factors.H);
    write_matrix(dir / "truth/S.csv", stack_S(gt.factors.S));
    tp.V = "truth/V.csv";
    tp.H = "truth/H.csv";
    tp.S = "truth/S.csv";
    m.truth = tp;
    write_json(dir / "manifest.json", to_json(m));
    return m;
}

inline TruthBundle read_truth(const DatasetManifest& m, const fs::path& root) {
    if (!m.truth) throw IoError("manifest has no ground-truth section");
    const auto& tp = *m.truth;
    TruthBundle t;
    t.factors.V = read_matrix(root / tp.V);
    t.factors.H = read_matrix(root / tp.H);
    const Index r = t.factors.V.cols();
    if (t.factors.H.rows() != r || t.factors.H.cols() != r || t.factors.V.rows() != m.J)
        throw DimensionError("truth: V/H shapes disagree with the manifest");
    t.graph = read_graph((root / tp.W).parent_path());
    if (t.graph.nodes() != r) throw DimensionError("truth: graph size differs from rank");
    if (tp.trajectories.size() != m.K) throw DimensionError("truth: trajectory count differs from K");
    for (std::size_t k = 0; k < m.K; ++k)
        t.trajectories.push_back(read_matrix_checked(root / tp.trajectories[k], m.slices[k].visits, r));
    if (!tp.S.empty()) t.factors.S = unstack_S(read_matrix_checked(root / tp.S, static_cast<Index>(m.K), r));
    for (const auto& u : tp.U) t.factors.U.push_back(read_matrix(root / u));
    return t;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Scenario and solver settings. Missing keys keep their defaults; unknown
/// keys are rejected so that typos do not pass silently.
struct RunConfig {
    SyntheticParams synthetic;
    SolverConfig solver;
    std::vector<std::string> labels;
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known |= it.key() == k;
        if (!known) throw ArgumentError("config: unknown key '" + where + it.key() + "'");
    }
}

template <class T>
void get_opt(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
    RunConfig c;
    try {
        if (!j.is_object()) throw ArgumentError("config: top level must be an object");
        detail::reject_unknown(j, {"synthetic", "solver", "causal", "labels"}, "");
        if (j.contains("synthetic")) {
            const json& s = j["synthetic"];
            detail::reject_unknown(s,
                                   {"slices", "features", "rank", "min_visits", "max_visits", "lags", "mean_degree_w",
                                    "mean_degree_a", "eta", "noise_level", "svar_noise", "svar_noise_per_slice",
                                    "off_block_scale", "haar_q", "seed"},
                                   "synthetic.");
            auto& p = c.synthetic;
            detail::get_opt(s, "slices", p.slices);
            detail::get_opt(s, "features", p.features);
            detail::get_opt(s, "rank", p.rank);
            detail::get_opt(s, "min_visits", p.min_visits);
            detail::get_opt(s, "max_visits", p.max_visits);
            detail::get_opt(s, "lags", p.lags);
            detail::get_opt(s, "mean_degree_w", p.mean_degree_w);
            detail::get_opt(s, "mean_degree_a", p.mean_degree_a);
            detail::get_opt(s, "eta", p.eta);
            detail::get_opt(s, "noise_level", p.noise_level);
            detail::get_opt(s, "svar_noise", p.svar_noise);
            detail::get_opt(s, "svar_noise_per_slice", p.svar_noise_per_slice);
            detail::get_opt(s, "off_block_scale", p.off_block_scale);
            detail::get_opt(s, "haar_q", p.haar_q);
            detail::get_opt(s, "seed", p.seed);
            carted::detail::require_arg(p.slices >= 1 && p.features >= 1 && p.rank >= 1 && p.min_visits >= 1 &&
                                    p.min_visits <= p.max_visits && p.lags >= 0,
                                "config: invalid synthetic sizes");
            carted::detail::require_arg(p.noise_level >= 0 && p.svar_noise >= 0 && p.eta >= 1 && p.mean_degree_w >= 0 &&
                                    p.mean_degree_a >= 0,
                                "config: invalid synthetic parameters");
        }
        if (j.contains("solver")) {
            const json& s = j["solver"];
            detail::reject_unknown(s,
                                   {"rank", "lags", "lambda_w", "lambda_a", "tau_w", "tau_a", "feasibility_tol",
                                    "loss_tol", "max_inner", "penalty_scale", "penalty_rule", "outer_max", "outer_tol",
                                    "outer_patience", "mode", "graph_init", "warm_start_runs", "warm_start_threshold",
                                    "seed"},
                                   "solver.");
            auto& o = c.solver;
            detail::get_opt(s, "rank", o.rank);
            detail::get_opt(s, "lags", o.lags);
            detail::get_opt(s, "lambda_w", o.lambda_w);
            detail::get_opt(s, "lambda_a", o.lambda_a);
            detail::get_opt(s, "tau_w", o.tau_w);
            detail::get_opt(s, "tau_a", o.tau_a);
            detail::get_opt(s, "feasibility_tol", o.block.feasibility_tol);
            detail::get_opt(s, "loss_tol", o.block.loss_tol);
            detail::get_opt(s, "max_inner", o.block.max_inner);
            detail::get_opt(s, "penalty_scale", o.block.penalty_scale);
            if (s.contains("penalty_rule")) {
                const auto m = s["penalty_rule"].get<std::string>();
                if (m == "trace") o.block.penalty_rule = PenaltyRule::trace;
                else if (m == "lipschitz") o.block.penalty_rule = PenaltyRule::lipschitz;
                else throw ArgumentError("config: unknown penalty_rule '" + m + "'");
            }
            detail::get_opt(s, "outer_max", o.outer_max);
            detail::get_opt(s, "outer_tol", o.outer_tol);
            detail::get_opt(s, "outer_patience", o.outer_patience);
            detail::get_opt(s, "warm_start_runs", o.warm_start_runs);
            detail::get_opt(s, "warm_start_threshold", o.warm_start_threshold);
            detail::get_opt(s, "seed", o.seed);
            if (s.contains("mode")) {
                const auto m = s["mode"].get<std::string>();
                if (m == "joint") o.mode = FitMode::joint;
                else if (m == "two-step" || m == "two_step") o.mode = FitMode::two_step;
                else throw ArgumentError("config: unknown mode '" + m + "'");
            }
            if (s.contains("graph_init")) {
                const auto m = s["graph_init"].get<std::string>();
                if (m == "identity") o.graph_init = GraphInit::identity;
                else if (m == "zero") o.graph_init = GraphInit::zero;
                else throw ArgumentError("config: unknown graph_init '" + m + "'");
            }
        }
        if (j.contains("causal")) {
            const json& s = j["causal"];
            detail::reject_unknown(s,
                                   {"rho1", "rho2", "phi1", "phi2", "max_outer", "h_tol", "rho_cap", "prox_max_iter",
                                    "prox_tol", "armijo", "max_halvings"},
                                   "causal.");
            auto& o = c.solver.causal;
            detail::get_opt(s, "rho1", o.rho1);
            detail::get_opt(s, "rho2", o.rho2);
            detail::get_opt(s, "phi1", o.phi1);
            detail::get_opt(s, "phi2", o.phi2);
            detail::get_opt(s, "max_outer", o.max_outer);
            detail::get_opt(s, "h_tol", o.h_tol);
            detail::get_opt(s, "rho_cap", o.rho_cap);
            detail::get_opt(s, "prox_max_iter", o.prox_max_iter);
            detail::get_opt(s, "prox_tol", o.prox_tol);
            detail::get_opt(s, "armijo", o.armijo);
            detail::get_opt(s, "max_halvings", o.max_halvings);
        }
        detail::get_opt(j, "labels", c.labels);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("config: ") + e.what());
    }
    c.solver.validate();
    return c;
}

inline RunConfig read_config(const fs::path& path) { return config_from_json(read_json(path)); }

inline json to_json(const RunConfig& c) {
    const auto& p = c.synthetic;
    const auto& o = c.solver;
    const auto& q = c.solver.causal;
    json j;
    j["synthetic"] = {{"slices", p.slices},
                      {"features", p.features},
                      {"rank", p.rank},
                      {"min_visits", p.min_visits},
                      {"max_visits", p.max_visits},
                      {"lags", p.lags},
                      {"mean_degree_w", p.mean_degree_w},
                      {"mean_degree_a", p.mean_degree_a},
                      {"eta", p.eta},
                      {"noise_level", p.noise_level},
                      {"svar_noise", p.svar_noise},
                      {"svar_noise_per_slice", p.svar_noise_per_slice},
                      {"off_block_scale", p.off_block_scale},
                      {"haar_q", p.haar_q},
                      {"seed", p.seed}};
    j["solver"] = {{"rank", o.rank},
                   {"lags", o.lags},
                   {"lambda_w", o.lambda_w},
                   {"lambda_a", o.lambda_a},
                   {"tau_w", o.tau_w},
                   {"tau_a", o.tau_a},
                   {"feasibility_tol", o.block.feasibility_tol},
                   {"loss_tol", o.block.loss_tol},
                   {"max_inner", o.block.max_inner},
                   {"penalty_scale", o.block.penalty_scale},
                   {"penalty_rule", o.block.penalty_rule == PenaltyRule::trace ? "trace" : "lipschitz"},
                   {"outer_max", o.outer_max},
                   {"outer_tol", o.outer_tol},
                   {"outer_patience", o.outer_patience},
                   {"mode", to_string(o.mode)},
                   {"graph_init", o.graph_init == GraphInit::identity ? "identity" : "zero"},
                   {"warm_start_runs", o.warm_start_runs},
                   {"warm_start_threshold", o.warm_start_threshold},
                   {"seed", o.seed}};
    j["causal"] = {{"rho1", q.rho1},         {"rho2", q.rho2},         {"phi1", q.phi1},
                   {"phi2", q.phi2},         {"max_outer", q.max_outer}, {"h_tol", q.h_tol},
                   {"rho_cap", q.rho_cap},   {"prox_max_iter", q.prox_max_iter}, {"prox_tol", q.prox_tol},
                   {"armijo", q.armijo},     {"max_halvings", q.max_halvings}};
    if (!c.labels.empty()) j["labels"] = c.labels;
    return j;
}

}  // namespace carted::io
