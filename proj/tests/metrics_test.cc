#include <random>

#include <gtest/gtest.h>

#include "support/oracles.h"
#include "treeconcord/error.h"
#include "treeconcord/metrics.h"

using namespace treeconcord;

namespace {

Eigen::VectorXi vec(std::initializer_list<int> v) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (const int x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Confusion, Examples) {
  const auto labels = vec({1, 1, 1, 1, 1, 1, 0, 0, 0, 0});
  EXPECT_EQ(confusion(labels, labels), (ConfusionMatrix{6, 0, 4, 0}));
  EXPECT_EQ(confusion(Eigen::VectorXi::Ones(10), labels), (ConfusionMatrix{6, 4, 0, 0}));
  EXPECT_EQ(confusion(vec({1, 0, 1, 0}), vec({1, 1, 0, 0})), (ConfusionMatrix{1, 1, 1, 1}));
}

TEST(Confusion, Errors) {
  EXPECT_THROW(confusion(vec({1, 0}), vec({1})), ValidationError);
  EXPECT_THROW(confusion(Eigen::VectorXi(0), Eigen::VectorXi(0)), ValidationError);
  EXPECT_THROW(confusion(vec({2}), vec({1})), ValidationError);
}

TEST(Evaluate, PerfectPredictions) {
  const auto r = evaluate({6, 0, 4, 0});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_FALSE(r.undefined_ratio);
}

TEST(Evaluate, MajorityPredictionsWeighted) {
  const auto r = evaluate({60, 40, 0, 0});
  EXPECT_DOUBLE_EQ(r.accuracy, 0.6);
  EXPECT_DOUBLE_EQ(r.recall, 0.6);
  EXPECT_TRUE(r.undefined_ratio);
}

TEST(Evaluate, HandOracleWeighted) {
  const ConfusionMatrix cm{50, 20, 20, 10};
  const auto r = evaluate(cm, Averaging::kWeighted);
  const auto s = oracle::class_scores(50, 20, 20, 10);
  const double n = s.support[0] + s.support[1];
  EXPECT_DOUBLE_EQ(r.accuracy, 0.7);
  EXPECT_NEAR(r.precision, (s.support[0] * s.precision[0] + s.support[1] * s.precision[1]) / n,
              1e-15);
  EXPECT_NEAR(r.f1, (s.support[0] * s.f1[0] + s.support[1] * s.f1[1]) / n, 1e-15);
}

TEST(Evaluate, MacroAndPositiveClass) {
  const ConfusionMatrix cm{50, 20, 20, 10};
  const auto s = oracle::class_scores(50, 20, 20, 10);
  const auto macro = evaluate(cm, Averaging::kMacro);
  EXPECT_NEAR(macro.recall, (s.recall[0] + s.recall[1]) / 2, 1e-15);
  const auto pos = evaluate(cm, Averaging::kPositiveClass);
  EXPECT_NEAR(pos.precision, s.precision[1], 1e-15);
  EXPECT_NEAR(pos.recall, s.recall[1], 1e-15);
}

TEST(Evaluate, WeightedRecallEqualsAccuracyExactly) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::int64_t> cell(0, 500);
  for (int i = 0; i < 1000; ++i) {
    ConfusionMatrix cm{cell(rng), cell(rng), cell(rng), cell(rng)};
    if (cm.total() == 0) cm.tp = 1;
    const auto r = evaluate(cm);
    ASSERT_EQ(r.recall, r.accuracy) << cm.tp << " " << cm.fp << " " << cm.tn << " " << cm.fn;
    ASSERT_GE(r.precision, 0.0);
    ASSERT_LE(r.precision, 1.0);
    ASSERT_GE(r.f1, 0.0);
    ASSERT_LE(r.f1, 1.0);
  }
}

TEST(Evaluate, ZeroPrecisionAndRecallGiveZeroF1) {
  const auto r = evaluate({0, 5, 0, 5}, Averaging::kPositiveClass);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f1, 0.0);
}

TEST(Evaluate, JsonCarriesSummaryAndConfusion) {
  const auto doc = to_json(evaluate({50, 20, 20, 10}));
  EXPECT_EQ(doc.at("averaging"), "weighted");
  EXPECT_EQ(doc.at("confusion").at("tp"), 50);
  EXPECT_EQ(doc.at("summary").at("accuracy"), "0.7000");
}

TEST(Averaging, Names) {
  EXPECT_EQ(averaging_from_string("binary"), Averaging::kPositiveClass);
  EXPECT_EQ(averaging_from_string(to_string(Averaging::kMacro)), Averaging::kMacro);
  EXPECT_THROW(averaging_from_string("micro"), ValidationError);
}
