#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "support/oracles.h"
#include "treeconcord/concordance.h"
#include "treeconcord/error.h"

using namespace treeconcord;

namespace {

const std::filesystem::path kData = TREECONCORD_DATA_DIR;

ImportanceVector scores(std::vector<std::string> names, std::vector<double> values) {
  ImportanceVector iv;
  iv.features = std::move(names);
  iv.scores = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return iv;
}

RankAssignment ranks(std::vector<std::string> names, std::vector<Band> bands) {
  return {"r", std::move(names), std::move(bands)};
}

const std::vector<std::string> kMinimum{"Age", "Stage", "T", "N", "M"};

FeatureSet minimum_universe() { return {"minimum", kMinimum}; }

WeightVector weights(const std::string& label, std::vector<double> w) {
  return {label, kMinimum, Eigen::Map<Eigen::VectorXd>(w.data(), 5)};
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST(Discretize, ThresholdExample) {
  const auto ra = discretize(scores({"Stage", "N", "Age", "T", "M"}, {0.60, 0.25, 0.15, 0, 0}));
  EXPECT_EQ(ra.rank("Stage"), Band::kFirst);
  EXPECT_EQ(ra.rank("N"), Band::kSecond);
  EXPECT_EQ(ra.rank("Age"), Band::kThird);
  EXPECT_EQ(ra.rank("T"), Band::kUnranked);
  EXPECT_EQ(ra.rank("M"), Band::kUnranked);
}

TEST(Discretize, DegenerateVectors) {
  const auto zero = discretize(scores({"a", "b"}, {0, 0}));
  EXPECT_FALSE(zero.any_ranked());
  const auto single = discretize(scores({"a", "b", "c"}, {0, 1e-6, 0}));
  EXPECT_EQ(single.ranks, (std::vector<Band>{Band::kUnranked, Band::kFirst, Band::kUnranked}));
  EXPECT_THROW(discretize(scores({"a"}, {-0.1})), ValidationError);
  EXPECT_THROW(discretize(scores({"a"}, {std::nan("")})), ValidationError);
  const auto floored = discretize(floor_negatives(scores({"a", "b"}, {-0.1, 0.2})));
  EXPECT_EQ(floored.rank("a"), Band::kUnranked);
}

TEST(Discretize, QuantilePolicy) {
  DiscretizePolicy q;
  q.kind = DiscretizePolicy::Kind::kQuantile;
  const auto ra = discretize(scores({"a", "b", "c", "d", "e", "f", "g"},
                                    {0.9, 0.8, 0.5, 0.4, 0.2, 0.1, 0.001}),
                             q);
  EXPECT_EQ(ra.ranks, (std::vector<Band>{Band::kFirst, Band::kFirst, Band::kSecond,
                                         Band::kSecond, Band::kThird, Band::kThird,
                                         Band::kUnranked}));
}

TEST(Discretize, BandsFollowScoreOrder) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto kind : {DiscretizePolicy::Kind::kThreshold, DiscretizePolicy::Kind::kQuantile}) {
    DiscretizePolicy policy;
    policy.kind = kind;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::string> names;
      std::vector<double> values;
      for (int j = 0; j < 8; ++j) {
        names.push_back("f" + std::to_string(j));
        values.push_back(u(rng) < 0.2 ? 0.0 : u(rng));
      }
      const auto ra = discretize(scores(names, values), policy);
      // Higher score never receives a worse band (unranked counts as band 4).
      auto order = [](Band b) { return b == Band::kUnranked ? 4 : static_cast<int>(b); };
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
          if (values[i] > values[j]) ASSERT_LE(order(ra.ranks[i]), order(ra.ranks[j]));
        }
      }
    }
  }
}

TEST(Discretize, PolicyValidation) {
  DiscretizePolicy p;
  p.t1 = 0.2;
  EXPECT_THROW(p.validate(), ValidationError);
  EXPECT_EQ(DiscretizePolicy{}.describe().rfind("policy=threshold", 0), 0u);
}

TEST(RankLabel, DefaultsFromMethodAndModel) {
  ImportanceVector iv;
  iv.method = XaiMethod::kMdi;
  iv.model_id = "gbt";
  EXPECT_EQ(default_rank_label(iv), "MDI-XGB");
  iv.method = XaiMethod::kLime;
  iv.model_id = "DT";
  EXPECT_EQ(default_rank_label(iv), "LIME-DT");
}

TEST(Weights, RanksToWeightsExamples) {
  const auto w = ranks_to_weights(ranks({"Stage", "N", "Age", "T", "M"},
                                        {Band::kFirst, Band::kSecond, Band::kSecond,
                                         Band::kThird, Band::kUnranked}));
  EXPECT_EQ(w.weights, (Eigen::VectorXd(5) << 3, 2, 2, 1, 0).finished());

  const auto none = ranks_to_weights(ranks({"a", "b"}, {Band::kUnranked, Band::kUnranked}));
  EXPECT_EQ(none.weights, Eigen::VectorXd::Zero(2));

  const auto custom = ranks_to_weights(ranks({"f", "g"}, {Band::kFirst, Band::kThird}),
                                       WeightMap::parse("1=10,2=5,3=1,unranked=0"));
  EXPECT_EQ(custom.weights, Eigen::Vector2d(10, 1));
}

TEST(Weights, MapParsingAndValidation) {
  EXPECT_EQ(WeightMap::parse(WeightMap{}.to_string()), WeightMap{});
  EXPECT_THROW(WeightMap::parse("1=3,2=2,3=1"), ValidationError);
  EXPECT_THROW(WeightMap::parse("1=3,2=3,3=1,unranked=0"), ValidationError);
  EXPECT_THROW(WeightMap::parse("1=3,2=2,3=1,unranked=-1"), ValidationError);
}

TEST(ReferenceRanking, MinimumGuidelines) {
  const auto abbr = load_abbreviations(kData / "pancreatic" / "abbreviations.csv");
  const auto ra = load_reference_ranking(kData / "pancreatic" / "minimum" / "Guidelines.csv",
                                         minimum_universe(), abbr);
  EXPECT_EQ(ra.label, "Guidelines");
  EXPECT_EQ(ranks_to_weights(ra).weights, (Eigen::VectorXd(5) << 1, 3, 2, 2, 2).finished());
}

TEST(ReferenceRanking, EmptyFileIsAllUnranked) {
  const auto path = temp_file("tc_empty_ranks.csv", "feature,rank\n");
  const auto ra = load_reference_ranking(path, minimum_universe());
  EXPECT_EQ(ra.features, kMinimum);
  EXPECT_FALSE(ra.any_ranked());
  std::filesystem::remove(path);
}

TEST(ReferenceRanking, RejectsBadRows) {
  const auto bad_rank = temp_file("tc_bad_rank.csv", "feature,rank\nAge,1\nStage,4\n");
  try {
    load_reference_ranking(bad_rank, minimum_universe());
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'4'"), std::string::npos) << msg;
  }
  const auto unknown = temp_file("tc_unknown_rank.csv", "feature,rank\nTumour,1\n");
  EXPECT_THROW(load_reference_ranking(unknown, minimum_universe()), ValidationError);
  const auto dup = temp_file("tc_dup_rank.csv", "feature,rank\nAge,1\nAge,2\n");
  EXPECT_THROW(load_reference_ranking(dup, minimum_universe()), ValidationError);
  for (const auto& p : {bad_rank, unknown, dup}) std::filesystem::remove(p);
}

TEST(RankCsv, WriteThenLoad) {
  const auto ra = discretize(scores({"Stage", "N", "Age", "T", "M"}, {0.60, 0.25, 0.15, 0, 0}),
                             {}, "MDI-DT");
  const auto path = std::filesystem::temp_directory_path() / "MDI-DT.csv";
  write_rank_csv(ra, path, {"source: test"});
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text, "# source: test\nfeature,rank\nStage,1\nN,2\nAge,3\nT,\nM,\n");
  const auto back = load_rank_csv(path);
  EXPECT_EQ(back.label, "MDI-DT");
  EXPECT_EQ(back.features, ra.features);
  EXPECT_EQ(back.ranks, ra.ranks);
  std::filesystem::remove(path);
}

TEST(Jaccard, Examples) {
  EXPECT_EQ(jaccard({"a", "b"}, {"a", "b"}), 1.0);
  EXPECT_EQ(jaccard({"a"}, {"b"}), 0.0);
  EXPECT_DOUBLE_EQ(jaccard({"a", "b"}, {"b", "c"}), 1.0 / 3.0);
  EXPECT_EQ(jaccard({}, {}), 1.0);
}

TEST(WeightedJaccard, MinimumSetCells) {
  const auto guidelines = weights("Guidelines", {1, 3, 2, 2, 2});
  EXPECT_DOUBLE_EQ(weighted_jaccard(guidelines, weights("Experts", {2, 3, 1, 2, 3})), 9.0 / 12);
  EXPECT_DOUBLE_EQ(weighted_jaccard(weights("MDI-DT", {2, 3, 0, 2, 0}), guidelines), 6.0 / 11);
  EXPECT_DOUBLE_EQ(weighted_jaccard(weights("MDI-XGB", {2, 3, 2, 2, 2}), guidelines), 10.0 / 11);
  EXPECT_EQ(weighted_jaccard(guidelines, guidelines), 1.0);
}

TEST(WeightedJaccard, AlignsByFeatureName) {
  const auto x = weights("x", {1, 3, 2, 2, 2});
  WeightVector y{"y", {"M", "N", "T", "Stage", "Age"}, (Eigen::VectorXd(5) << 2, 2, 2, 3, 1).finished()};
  EXPECT_EQ(weighted_jaccard(x, y), 1.0);
  WeightVector z{"z", {"Age", "Stage"}, Eigen::Vector2d(1, 3)};
  try {
    weighted_jaccard(x, z);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'z'"), std::string::npos);
  }
}

TEST(WeightedJaccard, Properties) {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> len(1, 30);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::uniform_int_distribution<int> exponent(-20, 20);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = len(rng);
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
      x[i] = u(rng) < 1.0 ? 0.0 : u(rng);
      y[i] = u(rng) < 1.0 ? 0.0 : u(rng);
    }
    const double s = weighted_jaccard(x, y);
    std::vector<double> xs(x.data(), x.data() + n), ys(y.data(), y.data() + n);
    ASSERT_NEAR(s, oracle::weighted_jaccard(xs, ys), 1e-12);
    ASSERT_GE(s, 0.0);
    ASSERT_LE(s, 1.0);
    ASSERT_EQ(s, weighted_jaccard(y, x));
    ASSERT_EQ(weighted_jaccard(x, x), 1.0);

    // Power-of-two scaling is exact in binary floating point; any other
    // positive factor agrees to a few ulps.
    const double pow2 = std::ldexp(1.0, exponent(rng));
    ASSERT_EQ(weighted_jaccard(Eigen::VectorXd(pow2 * x), Eigen::VectorXd(pow2 * y)), s);
    const double c = scale(rng);
    ASSERT_NEAR(weighted_jaccard(Eigen::VectorXd(c * x), Eigen::VectorXd(c * y)), s, 1e-15);

    std::set<int> a, b;
    Eigen::VectorXd xb(n), yb(n);
    for (int i = 0; i < n; ++i) {
      xb[i] = x[i] > 2.5 ? 1.0 : 0.0;
      yb[i] = y[i] > 2.5 ? 1.0 : 0.0;
      if (xb[i] > 0) a.insert(i);
      if (yb[i] > 0) b.insert(i);
    }
    ASSERT_EQ(weighted_jaccard(xb, yb), oracle::set_jaccard(a, b));
  }
}

TEST(WeightedJaccard, ConventionsAndErrors) {
  EXPECT_EQ(weighted_jaccard(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)), 1.0);
  EXPECT_THROW(weighted_jaccard(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)),
               ValidationError);
  EXPECT_THROW(weighted_jaccard(Eigen::Vector2d(1, -1), Eigen::Vector2d(1, 1)), ValidationError);
  // Works on integer expressions as well.
  EXPECT_EQ(weighted_jaccard(Eigen::Vector3i(2, 0, 1), Eigen::Vector3i(2, 0, 1)), 1);
}

TEST(SimilarityMatrix, SymmetricWithUnitDiagonal) {
  const std::vector<WeightVector> vs{weights("Guidelines", {1, 3, 2, 2, 2}),
                                     weights("Experts", {2, 3, 1, 2, 3}),
                                     weights("MDI-DT", {2, 3, 0, 2, 0})};
  const auto sm = similarity_matrix(vs);
  EXPECT_EQ(sm.labels, (std::vector<std::string>{"Guidelines", "Experts", "MDI-DT"}));
  EXPECT_TRUE(sm.values.isApprox(sm.values.transpose(), 0.0));
  EXPECT_EQ(sm.values.diagonal(), Eigen::Vector3d::Ones());
  EXPECT_DOUBLE_EQ(sm.at("Experts", "Guidelines"), 0.75);

  const auto same = similarity_matrix({vs[0], weights("copy", {1, 3, 2, 2, 2})});
  EXPECT_EQ(same.values, Eigen::Matrix2d::Ones());
}

TEST(SimilarityMatrix, Errors) {
  EXPECT_THROW(similarity_matrix({weights("a", {1, 1, 1, 1, 1})}), ValidationError);
  EXPECT_THROW(similarity_matrix({weights("a", {1, 1, 1, 1, 1}), weights("a", {0, 1, 1, 1, 1})}),
               ValidationError);
}

TEST(SimilarityMatrix, CsvUsesTwoDecimals) {
  const auto sm = similarity_matrix({weights("Guidelines", {1, 3, 2, 2, 2}),
                                     weights("MDI-DT", {2, 3, 0, 2, 0})});
  const auto path = std::filesystem::temp_directory_path() / "tc_similarity.csv";
  write_similarity_csv(sm, path);
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text, ",Guidelines,MDI-DT\nGuidelines,1.00,0.55\nMDI-DT,0.55,1.00\n");
  std::filesystem::remove(path);
}
