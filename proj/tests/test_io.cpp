#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "carted/io.hpp"
#include "carted/solver.hpp"
#include "carted/synthetic.hpp"
#include "support.hpp"

using namespace carted;
using namespace carted::io;

namespace {

class IoTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("carted_io_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

}  // namespace

TEST(Numbers, ShortestRoundTrip) {
    std::mt19937_64 rng(1);
    const Matrix m = oracle::randn(rng, 50, 4, 1e3);
    for (Index i = 0; i < m.size(); ++i) EXPECT_EQ(parse_double(format_double(m(i)), "t"), m(i));
    for (const double v : {0.0, -0.0, 1e-300, 5e-324, 1.7976931348623157e308, 0.1, -2.5})
        EXPECT_EQ(parse_double(format_double(v), "t"), v);
    EXPECT_EQ(parse_double(" +1.5\r", "t"), 1.5);
    EXPECT_THROW(parse_double("1,5", "t"), IoError);
    EXPECT_THROW(parse_double("", "t"), IoError);
    EXPECT_THROW(parse_double("abc", "t"), IoError);
}

TEST_F(IoTest, MatrixAndSliceRoundTrip) {
    std::mt19937_64 rng(2);
    const Matrix m = oracle::randn(rng, 7, 3);
    write_matrix(dir_ / "m.csv", m);
    EXPECT_EQ(read_matrix(dir_ / "m.csv"), m);
    write_slice(dir_ / "s.csv", m);
    EXPECT_EQ(read_slice(dir_ / "s.csv"), m);
    write_matrix(dir_ / "empty.csv", Matrix(0, 3));
    EXPECT_EQ(read_matrix(dir_ / "empty.csv").cols(), 3);
    EXPECT_FALSE(fs::exists(dir_ / "m.csv.tmp"));
    EXPECT_THROW(read_matrix_checked(dir_ / "m.csv", 3, 7), DimensionError);
}

TEST_F(IoTest, MalformedFiles) {
    write_atomic(dir_ / "short.csv", "3,2\n1,2\n3,4\n");
    EXPECT_THROW(read_matrix(dir_ / "short.csv"), IoError);
    write_atomic(dir_ / "ragged.csv", "1,2\n3\n");
    EXPECT_THROW(read_slice(dir_ / "ragged.csv"), IoError);
    write_atomic(dir_ / "header.csv", "x\n1\n");
    EXPECT_THROW(read_matrix(dir_ / "header.csv"), IoError);
    EXPECT_THROW(read_matrix(dir_ / "missing.csv"), IoError);
    write_atomic(dir_ / "bad.json", "{ not json");
    EXPECT_THROW(read_json(dir_ / "bad.json"), IoError);
}

TEST_F(IoTest, GraphRoundTrip) {
    std::mt19937_64 rng(3);
    const CausalGraph g = oracle::random_graph(rng, 4, 3);
    write_graph(dir_ / "g", g);
    const CausalGraph back = read_graph(dir_ / "g");
    EXPECT_EQ(back.W, g.W);
    ASSERT_EQ(back.A.size(), 3u);
    for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(back.A[p], g.A[p]);

    json idx = read_json(dir_ / "g" / "graph.json");
    idx["A"].erase(1);
    write_json(dir_ / "g" / "graph.json", idx);
    EXPECT_THROW(read_graph(dir_ / "g"), IoError);
}

TEST_F(IoTest, FactorsRoundTrip) {
    SyntheticParams p;
    p.slices = 5;
    p.seed = 4;
    const GroundTruth gt = assemble_instance(p);
    write_factors(dir_ / "f", gt.factors);
    const Parafac2Factors f = read_factors(dir_ / "f", 5);
    EXPECT_EQ(f.V, gt.factors.V);
    EXPECT_EQ(f.H, gt.factors.H);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_EQ(f.U[k], gt.factors.U[k]);
        EXPECT_EQ(f.S[k], gt.factors.S[k]);
        EXPECT_EQ(f.Q[k], gt.factors.Q[k]);
    }
    EXPECT_THROW(read_factors(dir_ / "f", 6), DimensionError);
}

TEST_F(IoTest, DatasetRoundTrip) {
    SyntheticParams p;
    p.slices = 8;
    p.noise_level = 0.3;
    p.seed = 5;
    const GroundTruth gt = assemble_instance(p);
    write_dataset(dir_, gt, {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"});
    const DatasetManifest m = read_manifest(dir_ / "manifest.json");
    EXPECT_EQ(m.K, 8u);
    EXPECT_EQ(m.J, 12);
    EXPECT_EQ(m.feature_labels.size(), 12u);
    const IrregularTensor x = load_tensor(m, dir_);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(x[k], gt.tensor[k]);
    const TruthBundle t = read_truth(m, dir_);
    EXPECT_EQ(t.factors.V, gt.factors.V);
    EXPECT_EQ(t.graph.W, gt.graph.W);
    for (std::size_t k = 0; k < 8; ++k) {
        EXPECT_EQ(t.trajectories[k], gt.trajectories[k]);
        EXPECT_EQ(t.factors.S[k], gt.factors.S[k]);
    }

    // a slice that disagrees with its declared shape
    write_slice(dir_ / m.slices[3].path, Matrix::Zero(2, 12));
    EXPECT_THROW(load_tensor(m, dir_), DimensionError);
}

TEST(Manifest, Validation) {
    json j = {{"format_version", 1}, {"K", 2}, {"J", 3}, {"slices", json::array({{{"id", 0}, {"visits", 4}, {"path", "a"}}})}};
    EXPECT_THROW(manifest_from_json(j), IoError);
    j["K"] = 1;
    EXPECT_NO_THROW(manifest_from_json(j));
    j["format_version"] = 99;
    EXPECT_THROW(manifest_from_json(j), IoError);
    EXPECT_THROW(manifest_from_json(json{{"K", 1}}), IoError);
    EXPECT_THROW(read_truth(DatasetManifest{}, "."), IoError);
}

TEST(Config, DefaultsAndRoundTrip) {
    const RunConfig d = config_from_json(json::object());
    EXPECT_EQ(d.solver.rank, 4);
    EXPECT_EQ(d.solver.lambda_w, 0.5);
    EXPECT_EQ(d.synthetic.slices, 100u);
    EXPECT_EQ(d.solver.causal.phi1, 1.6);

    json j = {{"synthetic", {{"slices", 7}, {"noise_level", 0.25}, {"seed", 11}}},
              {"solver",
               {{"rank", 3}, {"mode", "two-step"}, {"graph_init", "zero"}, {"penalty_rule", "lipschitz"}, {"tau_w", 0.2}}},
              {"causal", {{"phi2", 1.2}, {"max_outer", 40}}},
              {"labels", {"x", "y", "z"}}};
    const RunConfig c = config_from_json(j);
    EXPECT_EQ(c.synthetic.slices, 7u);
    EXPECT_EQ(c.synthetic.seed, 11u);
    EXPECT_EQ(c.solver.mode, FitMode::two_step);
    EXPECT_EQ(c.solver.graph_init, GraphInit::zero);
    EXPECT_EQ(c.solver.block.penalty_rule, PenaltyRule::lipschitz);
    EXPECT_EQ(c.solver.causal.phi2, 1.2);
    EXPECT_EQ(c.labels.size(), 3u);

    const json out = to_json(c);
    EXPECT_EQ(to_json(config_from_json(out)), out);
}

TEST(Config, Rejections) {
    EXPECT_THROW(config_from_json(json{{"solver", {{"rnak", 3}}}}), ArgumentError);
    EXPECT_THROW(config_from_json(json{{"extra", 1}}), ArgumentError);
    EXPECT_THROW(config_from_json(json{{"solver", {{"mode", "both"}}}}), ArgumentError);
    EXPECT_THROW(config_from_json(json{{"solver", {{"rank", 0}}}}), ArgumentError);
    EXPECT_THROW(config_from_json(json{{"solver", {{"rank", "four"}}}}), ArgumentError);
    EXPECT_THROW(config_from_json(json{{"causal", {{"phi1", 0.5}}}}), ArgumentError);
    EXPECT_THROW(config_from_json(json{{"synthetic", {{"min_visits", 9}, {"max_visits", 3}}}}), ArgumentError);
    EXPECT_THROW(config_from_json(json::array()), ArgumentError);
}

TEST_F(IoTest, TraceObjectiveColumn) {
    FitReport r;
    r.trace.resize(3);
    r.trace[0].objective = 3.5;
    r.trace[1].objective = 2.25;
    r.trace[2].objective = 0.1;
    write_atomic(dir_ / "trace.csv", trace_csv(r));
    EXPECT_EQ(read_trace_objective(dir_ / "trace.csv"), (std::vector<double>{3.5, 2.25, 0.1}));
}
