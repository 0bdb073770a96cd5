#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support/workspace.h"
#include "treeconcord/error.h"
#include "treeconcord/pipeline.h"

using namespace treeconcord;
namespace fs = std::filesystem;

namespace {

const std::string kCli = TREECONCORD_CLI;

int run(const std::string& args) {
  const int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small grid over the synthetic extract: two models, two feature sets.
std::string small_config(const fs::path& dir) {
  const auto p = workspace::kPancreatic;
  return "[run]\n"
         "data = extract.csv\n"
         "schema = schema.json\n"
         "feature_sets = " + (p / "minimum.txt").string() + ", " +
         (p / "recommended.txt").string() + "\n"
         "abbreviations = " + (p / "abbreviations.csv").string() + "\n"
         "seed = 42\n"
         "output = " + (dir / "report").string() + "\n"
         "mda_repeats = 3\n"
         "lime_samples = 200\n"
         "\n[model DT]\nkind = dt\nmax_depth = 3\nmin_samples_leaf = 5\n"
         "recommended.max_depth = 2\n"
         "\n[model XGB]\nkind = gbt\nmax_depth = 2\nn_estimators = 10\n"
         "\n[reference Guidelines]\n"
         "minimum = " + (p / "minimum" / "Guidelines.csv").string() + "\n"
         "recommended = " + (p / "recommended" / "Guidelines.csv").string() + "\n";
}

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = workspace::fresh_dir("tc_pipeline_" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    workspace::write_extract(dir_, 120, 5);
    std::ofstream(dir_ / "grid.ini") << small_config(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

}  // namespace

TEST(Config, RoundTripsThroughText) {
  const auto cfg = parse_config(
      "[run]\ndata = a.csv\nschema = s.json\nfeature_sets = m.txt, r.txt\nseed = 7\n"
      "discretization = quantile\nweights = 1=5,2=3,3=1,unranked=0\n"
      "[model RF]\nkind = rf\nn_estimators = 30\nr.max_depth = 4\n"
      "[reference Experts]\nm = e.csv\n");
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.models.at(0).params_for("r").max_depth, 4);
  EXPECT_EQ(cfg.models.at(0).params_for("m").max_depth, 3);
  EXPECT_EQ(cfg.policy.kind, DiscretizePolicy::Kind::kQuantile);
  EXPECT_EQ(parse_config(config_to_text(cfg)), cfg);
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_config("[run]\nseed = 1\nseed = 2\n"), ValidationError);
  EXPECT_THROW(parse_config("[run]\ncolour = red\n"), ValidationError);
  EXPECT_THROW(parse_config("[model X]\nkind = dt\nseed = 3\n[run]\n"), ValidationError);
  EXPECT_THROW(parse_config("[run]\n[model X]\nkind = dt\nm.kind = rf\n"), ValidationError);
}

TEST(Config, StudyGridSummaries) {
  const auto cfg = load_config(workspace::kPancreatic / "report.ini");
  ASSERT_EQ(cfg.models.size(), 3u);
  EXPECT_EQ(params_summary(cfg.models[0].params_for("minimum")), "md=3, msl=5");
  EXPECT_EQ(params_summary(cfg.models[0].params_for("recommended")), "md=2, msl=30");
  EXPECT_EQ(params_summary(cfg.models[1].params_for("maximum")), "md=4, msl=5");
  EXPECT_EQ(params_summary(cfg.models[2].params_for("recommended")), "md=4, ne=40");
}

TEST_F(PipelineTest, ValidationHappensBeforeTraining) {
  auto cfg = load_config(dir_ / "grid.ini");
  auto no_seed = cfg;
  no_seed.seed.reset();
  EXPECT_THROW(no_seed.validate(), ValidationError);
  auto missing_ref = cfg;
  missing_ref.references[0].paths["minimum"] = "nowhere.csv";
  EXPECT_THROW(run_report(missing_ref), ValidationError);
  EXPECT_FALSE(fs::exists(dir_ / "report"));
}

TEST_F(PipelineTest, ReportWritesTheGrid) {
  const auto result = run_report(load_config(dir_ / "grid.ini"));
  EXPECT_EQ(result.cells, 4);
  EXPECT_EQ(result.manifest.status, "complete");
  const fs::path out = result.output_dir;
  int metrics = 0, importance = 0, matrices = 0;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    const auto name = e.path().filename().string();
    if (name == "metrics.json") ++metrics;
    if (name.rfind("importance_", 0) == 0) ++importance;
    if (name.rfind("similarity", 0) == 0 && e.path().extension() == ".csv") ++matrices;
  }
  EXPECT_EQ(metrics, 4);
  EXPECT_EQ(importance, 16);
  EXPECT_EQ(matrices, 6);
  EXPECT_TRUE(fs::exists(out / "minimum" / "DT" / "shap_values.csv"));
  EXPECT_TRUE(fs::exists(out / "recommended" / "XGB" / "ranks" / "LIME-XGB.csv"));

  const auto table = slurp(out / "accuracy_table.csv");
  EXPECT_EQ(table.rfind("Model,Parameters,Feature Set,Accuracy,Precision,Recall,F1\n"
                        "DT,\"md=3, msl=5\",Minimum,", 0),
            0u)
      << table;

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest.at("artifacts").size(), result.manifest.artifacts.size());
  for (const auto& a : result.manifest.artifacts) {
    EXPECT_EQ(a.sha256, sha256_file(out / a.path)) << a.path;
  }
}

TEST_F(PipelineTest, RerunGivesIdenticalDigests) {
  const auto cfg = load_config(dir_ / "grid.ini");
  const auto first = run_report(cfg, dir_ / "a");
  const auto second = run_report(cfg, dir_ / "b");
  ASSERT_EQ(first.manifest.artifacts.size(), second.manifest.artifacts.size());
  for (std::size_t i = 0; i < first.manifest.artifacts.size(); ++i) {
    EXPECT_EQ(first.manifest.artifacts[i].path, second.manifest.artifacts[i].path);
    EXPECT_EQ(first.manifest.artifacts[i].sha256, second.manifest.artifacts[i].sha256);
  }
  EXPECT_EQ(first.manifest.config_sha256, second.manifest.config_sha256);
}

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_F(PipelineTest, CliTrainExplainRankSimilarity) {
  const auto d = dir_.string();
  const auto minimum = (workspace::kPancreatic / "minimum.txt").string();
  const std::string train = "train --data " + d + "/extract.csv --schema " + d +
                            "/schema.json --features " + minimum +
                            " --model dt --max-depth 3 --min-samples-leaf 5 --quiet";
  EXPECT_EQ(run(train + " --out " + d + "/run"), 2) << "missing --seed";
  ASSERT_EQ(run(train + " --seed 42 --out " + d + "/run"), 0);
  ASSERT_EQ(run(train + " --seed 42 --out " + d + "/rerun"), 0);
  EXPECT_EQ(slurp(dir_ / "run" / "model.json"), slurp(dir_ / "rerun" / "model.json"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "metrics.json"));

  const std::string explain = "explain --model " + d + "/run/model.json --data " + d +
                              "/extract.csv --schema " + d + "/schema.json --split " + d +
                              "/run/split.json --quiet";
  EXPECT_EQ(run(explain + " --method lime --seed 1 --lime-samples 20 --out " + d + "/x"), 2);
  ASSERT_EQ(run(explain + " --method mdi --out " + d + "/x"), 0);
  ASSERT_EQ(run(explain + " --method shap --out " + d + "/x"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "x" / "shap_values.csv"));

  ASSERT_EQ(run("rank --importance " + d + "/x/importance_mdi.json --out " + d + "/ranks/ --quiet"),
            0);
  EXPECT_TRUE(fs::exists(dir_ / "ranks" / "MDI-DT.csv"));

  const auto guidelines = (workspace::kPancreatic / "minimum" / "Guidelines.csv").string();
  ASSERT_EQ(run("similarity --ranks " + guidelines + " " + guidelines + " --out " + d +
                "/sim --quiet"),
            0);
  EXPECT_EQ(slurp(dir_ / "sim" / "similarity.csv"),
            ",Guidelines,Guidelines#2\nGuidelines,1.00,1.00\nGuidelines#2,1.00,1.00\n");

  std::ofstream(dir_ / "other.csv") << "feature,rank\nGender,1\n";
  EXPECT_EQ(run("similarity --ranks " + guidelines + " " + d + "/other.csv --out " + d +
                "/sim2 --quiet"),
            2);
}
