#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "support/oracles.h"
#include "treeconcord/error.h"
#include "treeconcord/xai.h"

using namespace treeconcord;

namespace {

ModelParams params(ModelKind kind, int md, int ne = 20) {
  ModelParams p;
  p.kind = kind;
  p.max_depth = md;
  p.min_samples_leaf = 2;
  p.n_estimators = ne;
  p.seed = 13;
  return p;
}

// Balanced data whose label is exactly `a > 0.5`, plus noise columns.
Dataset stump_data(std::int64_t rows, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.n_rows = rows;
  spec.columns = {suites::uniform("a"), suites::uniform("b"), suites::uniform("c")};
  spec.rule = {DecisionRule::Combine::kAll, {{"a", 0.5}}};
  spec.seed = seed;
  return synthesize(spec);
}

Dataset constant_data() {
  Dataset d;
  d.columns = {ColumnSpec::numeric("a"), ColumnSpec::numeric("b")};
  d.values = Eigen::MatrixXd::Random(20, 2);
  d.target = Eigen::VectorXi::Ones(20);
  return d;
}

std::vector<EnsembleModel> suite_models() {
  std::vector<EnsembleModel> out;
  for (const auto& d : suites::rule_suite(17, 200)) {
    out.push_back(train_model(d, params(ModelKind::kDecisionTree, 4)));
    out.push_back(train_model(d, params(ModelKind::kRandomForest, 3)));
    out.push_back(train_model(d, params(ModelKind::kGradientBoosting, 3)));
  }
  return out;
}

}  // namespace

TEST(Mdi, SingleSplitTakesAllImportance) {
  const auto d = stump_data(100, 1);
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 1));
  const auto iv = mdi(m);
  EXPECT_TRUE(iv.normalized);
  EXPECT_EQ(iv.score("a"), 1.0);
  EXPECT_EQ(iv.score("b"), 0.0);
  EXPECT_EQ(iv.score("c"), 0.0);
}

TEST(Mdi, HandBuiltTreeWeightsGainBySampleShare) {
  EnsembleModel m;
  m.feature_names = {"f", "g"};
  Tree t;
  t.nodes.resize(5);
  t.nodes[0] = {0, 0.5, 1, 2, 100, 0.5, 0.3, 0.0, {50, 50}};
  t.nodes[1] = {1, 0.5, 3, 4, 40, 0.4, 0.1, 0.0, {30, 10}};
  t.nodes[2].n_samples = 60;
  t.nodes[3].n_samples = 20;
  t.nodes[4].n_samples = 20;
  m.trees.push_back(t);
  const double f = 0.3 * 100.0 / 100.0;
  const double g = 0.1 * 40.0 / 100.0;
  const auto iv = mdi(m);
  EXPECT_NEAR(iv.score("f"), f / (f + g), 1e-15);
  EXPECT_NEAR(iv.score("g"), g / (f + g), 1e-15);
}

TEST(Mdi, NormalizedSumsToOneOnSuite) {
  for (const auto& m : suite_models()) {
    const auto iv = mdi(m);
    ASSERT_TRUE(iv.normalized);
    EXPECT_NEAR(iv.scores.sum(), 1.0, 1e-12);
    EXPECT_GE(iv.scores.minCoeff(), 0.0);
  }
}

TEST(Mdi, DepthZeroModelIsAllZero) {
  const auto m = train_decision_tree(constant_data(), params(ModelKind::kDecisionTree, 3));
  const auto iv = mdi(m);
  EXPECT_FALSE(iv.normalized);
  EXPECT_EQ(iv.scores.sum(), 0.0);
}

TEST(Mda, UnusedFeatureIsExactlyZero) {
  const auto d = stump_data(150, 2);
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 1));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto iv = mda(m, d, 5, seed);
    EXPECT_EQ(iv.score("b"), 0.0);
    EXPECT_EQ(iv.score("c"), 0.0);
  }
}

TEST(Mda, PerfectStumpLosesHalfItsAccuracy) {
  GeneratorSpec spec;
  spec.n_rows = 200;
  spec.columns = {suites::binary("a"), suites::uniform("b")};
  spec.rule = {DecisionRule::Combine::kAll, {{"a", 1.0}}};
  spec.layout = GeneratorSpec::Layout::kGrid;
  spec.seed = 3;
  const auto d = synthesize(spec);
  ASSERT_EQ(d.class_counts()[0], d.class_counts()[1]);
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 1));
  ASSERT_EQ(accuracy(m, d), 1.0);
  const auto iv = mda(m, d, 20, 99);
  EXPECT_NEAR(iv.score("a"), 0.5, 0.05);
}

TEST(Mda, DeterministicPerSeed) {
  const auto d = suites::rule_suite(4)[0];
  const auto m = train_model(d, params(ModelKind::kRandomForest, 3));
  EXPECT_EQ(mda(m, d, 4, 10).scores, mda(m, d, 4, 10).scores);
  EXPECT_NE(mda(m, d, 4, 10).scores, mda(m, d, 4, 11).scores);
  EXPECT_THROW(mda(m, d, 0, 1), ValidationError);
}

TEST(Shap, MatchesEnumerationOracleOnRandomTrees) {
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> dims(1, 8);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = dims(rng);
    const Tree t = oracle::random_tree(rng, d, 3);
    for (int k = 0; k < 5; ++k) {
      Eigen::RowVectorXd x(d);
      for (auto& v : x) v = unit(rng);
      Eigen::VectorXd phi = Eigen::VectorXd::Zero(d);
      tree_shap(t, x, 1.0, phi);
      const Eigen::VectorXd expected = oracle::shapley_by_enumeration(t, x);
      ASSERT_LT((phi - expected).cwiseAbs().maxCoeff(), 1e-9) << "trial " << trial;
      const double total = phi.sum() + tree_expected_value(t);
      ASSERT_NEAR(total, oracle::conditional_value(t, 0, x, (1u << d) - 1), 1e-12);
    }
  }
}

TEST(Shap, LocalAccuracyOnSuiteModels) {
  const auto data = suites::rule_suite(17, 200);
  std::size_t i = 0;
  for (const auto& m : suite_models()) {
    const auto& d = data[i++ / 3];
    const auto sm = shap_values(m, d);
    for (Eigen::Index r = 0; r < d.row_count(); ++r) {
      ASSERT_NEAR(sm.values.row(r).sum() + sm.base_value, raw_output(m, d.values.row(r)),
                  1e-9);
    }
  }
}

TEST(Shap, DummyFeatureGetsNothing) {
  const auto d = stump_data(80, 5);
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 1));
  const auto sm = shap_values(m, d);
  for (Eigen::Index r = 0; r < d.row_count(); ++r) {
    EXPECT_EQ(sm.values(r, 1), 0.0);
    EXPECT_EQ(sm.values(r, 2), 0.0);
    EXPECT_NEAR(sm.values(r, 0), raw_output(m, d.values.row(r)) - sm.base_value, 1e-15);
  }
}

TEST(Shap, GlobalIsMeanAbsolute) {
  ShapMatrix sm;
  sm.features = {"f", "g"};
  sm.values = Eigen::MatrixXd::Zero(3, 2);
  EXPECT_EQ(shap_global(sm).scores, Eigen::VectorXd::Zero(2));

  sm.values.resize(1, 2);
  sm.values << 0.2, -0.4;
  auto iv = shap_global(sm);
  EXPECT_DOUBLE_EQ(iv.score("f"), 0.2);
  EXPECT_DOUBLE_EQ(iv.score("g"), 0.4);

  sm.values.resize(2, 2);
  sm.values << 1, 0, -1, 0;
  iv = shap_global(sm);
  EXPECT_EQ(iv.score("f"), 1.0);
  EXPECT_EQ(iv.score("g"), 0.0);
}

TEST(Shap, CsvHasBaseValueColumn) {
  const auto d = stump_data(20, 6);
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 2));
  const auto path = std::filesystem::temp_directory_path() / "tc_shap.csv";
  write_shap_csv(shap_values(m, d), path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "a,b,c,base_value");
  std::filesystem::remove(path);
}

TEST(Lime, ConstantModelHasNoCoefficients) {
  const auto d = constant_data();
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 3));
  LimeConfig cfg;
  cfg.seed = 4;
  const auto ex = lime_local(m, d, d.values.row(0), cfg);
  EXPECT_LT(ex.coefficients.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(ex.intercept, 1.0, 1e-9);
  EXPECT_TRUE(ex.feature_weights.empty());
}

TEST(Lime, StumpFeatureRanksFirst) {
  const auto d = stump_data(200, 8);
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 1));
  ASSERT_EQ(m.trees[0].root().feature, 0);
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    LimeConfig cfg;
    cfg.seed = seed;
    const auto ex = lime_local(m, d, d.values.row(static_cast<Eigen::Index>(seed)), cfg);
    if (!ex.feature_weights.empty() && ex.feature_weights.front().first == "a") ++hits;
  }
  EXPECT_GE(hits, 95);
}

TEST(Lime, DeterministicAndValidated) {
  const auto d = stump_data(50, 9);
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 2));
  LimeConfig cfg;
  cfg.seed = 21;
  const auto a = lime_local(m, d, d.values.row(3), cfg);
  const auto b = lime_local(m, d, d.values.row(3), cfg);
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.feature_weights, b.feature_weights);
  EXPECT_EQ(a.kernel_width, 0.75 * std::sqrt(3.0));

  EXPECT_THROW(lime_local(m, take_rows(d, {0, 1, 2, 3, 4, 5, 6}), d.values.row(0), cfg),
               ValidationError);
  cfg.n_samples = 29;
  EXPECT_THROW(lime_local(m, d, d.values.row(0), cfg), ValidationError);
}

TEST(Lime, GlobalFrequencies) {
  const auto d = stump_data(40, 10);
  const auto m = train_decision_tree(d, params(ModelKind::kDecisionTree, 1));
  LimeConfig cfg;
  cfg.top_k = 1;
  cfg.seed = 3;
  const auto iv = lime_global(m, d, cfg);
  EXPECT_EQ(iv.score("a"), 1.0);
  EXPECT_EQ(iv.score("b"), 0.0);
  EXPECT_EQ(iv.score("c"), 0.0);

  const auto suite = suites::rule_suite(6, 60)[1];
  const auto rf = train_model(suite, params(ModelKind::kRandomForest, 3, 10));
  cfg.top_k = 3;
  const auto g = lime_global(rf, suite, cfg);
  EXPECT_GE(g.scores.minCoeff(), 0.0);
  EXPECT_LE(g.scores.maxCoeff(), 1.0);
  EXPECT_EQ(g.scores, lime_global(rf, suite, cfg).scores);
}

TEST(Importance, JsonRoundTrip) {
  ImportanceVector iv;
  iv.method = XaiMethod::kShap;
  iv.model_id = "RF";
  iv.features = {"Stage", "Age"};
  iv.scores = Eigen::Vector2d(0.125, 0.1 + 0.2);
  const auto path = std::filesystem::temp_directory_path() / "tc_importance.json";
  save_importance(iv, path);
  const auto back = load_importance(path);
  EXPECT_EQ(back.method, iv.method);
  EXPECT_EQ(back.model_id, "RF");
  EXPECT_EQ(back.features, iv.features);
  EXPECT_EQ(back.scores, iv.scores);
  std::filesystem::remove(path);
}
