#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "treeconcord/concordance.h"
#include "treeconcord/error.h"
#include "treeconcord/metrics.h"
#include "treeconcord/pipeline.h"
#include "treeconcord/tabular.h"
#include "treeconcord/tree_model.h"
#include "treeconcord/xai.h"

namespace fs = std::filesystem;
using namespace treeconcord;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool seed_required, bool out_required) {
  auto* seed = cmd->add_option("--seed", c.seed, "Random seed");
  if (seed_required) seed->required();
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
  cmd->add_flag("--quiet", c.quiet, "Suppress console output");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed for " + path.string());
}

void print_report(const EvalReport& r) {
  std::printf("accuracy  %.4f\nprecision %.4f\nrecall    %.4f\nf1        %.4f\n",
              r.accuracy, r.precision, r.recall, r.f1);
  if (r.undefined_ratio) std::printf("note: an undefined ratio was reported as 0\n");
}

// Rows of `d` listed as test rows in a split file written by `train`.
Dataset holdout_rows(const Dataset& d, const std::string& split_path) {
  std::ifstream in(split_path);
  if (!in) throw ValidationError("cannot open split file: " + split_path);
  std::vector<Eigen::Index> rows;
  try {
    rows = nlohmann::json::parse(in).at("test_rows").get<std::vector<Eigen::Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed split file " + split_path + ": " + e.what());
  }
  for (const auto r : rows) {
    if (r < 0 || r >= d.row_count()) {
      throw ValidationError("split file " + split_path + " refers to row " +
                            std::to_string(r) + " outside the data");
    }
  }
  return take_rows(d, rows);
}

struct DataArgs {
  std::string data;
  std::string schema;
  std::string split;
};

void add_data(CLI::App* cmd, DataArgs& a, bool with_split) {
  cmd->add_option("--data", a.data, "Case CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--schema", a.schema, "Schema JSON")->required()->check(CLI::ExistingFile);
  if (with_split) {
    cmd->add_option("--split", a.split, "split.json from train; restricts to test rows")
        ->check(CLI::ExistingFile);
  }
}

Dataset load_for_model(const DataArgs& a, const EnsembleModel& m) {
  const Dataset full = load_csv(a.data, load_schema(a.schema));
  Dataset d = select_features(full, m.feature_names);
  return a.split.empty() ? d : holdout_rows(d, a.split);
}

std::string default_model_id(const EnsembleModel& m) {
  switch (m.params.kind) {
    case ModelKind::kDecisionTree: return "DT";
    case ModelKind::kRandomForest: return "RF";
    case ModelKind::kGradientBoosting: return "XGB";
  }
  return "MODEL";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree ensembles, feature attributions, and ranking concordance"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // train
  Common train_c;
  DataArgs train_d;
  std::string features_path, model_kind = "dt", max_features = "sqrt", averaging = "weighted";
  ModelParams tp;
  bool no_bootstrap = false, no_stratify = false;
  double test_fraction = 0.3;
  auto* train = app.add_subcommand("train", "Train a model and evaluate it on a holdout");
  add_data(train, train_d, false);
  train->add_option("--features", features_path, "Feature-set file")->check(CLI::ExistingFile);
  train->add_option("--model", model_kind, "dt, rf or gbt (xgb)")->required();
  train->add_option("--max-depth", tp.max_depth)->capture_default_str();
  train->add_option("--min-samples-leaf", tp.min_samples_leaf)->capture_default_str();
  train->add_option("--n-estimators", tp.n_estimators)->capture_default_str();
  train->add_option("--max-features", max_features, "sqrt, all or a count")
      ->capture_default_str();
  train->add_flag("--no-bootstrap", no_bootstrap);
  train->add_option("--learning-rate", tp.learning_rate)->capture_default_str();
  train->add_option("--l2-lambda", tp.l2_lambda)->capture_default_str();
  train->add_option("--min-gain", tp.min_gain)->capture_default_str();
  train->add_option("--test-fraction", test_fraction)->capture_default_str();
  train->add_flag("--no-stratify", no_stratify);
  train->add_option("--averaging", averaging, "weighted, macro or binary")
      ->capture_default_str();
  add_common(train, train_c, true, true);

  // evaluate
  Common eval_c;
  DataArgs eval_d;
  std::string eval_model, eval_averaging = "weighted";
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a saved model");
  evaluate_cmd->add_option("--model", eval_model, "model.json")->required()
      ->check(CLI::ExistingFile);
  add_data(evaluate_cmd, eval_d, true);
  evaluate_cmd->add_option("--averaging", eval_averaging)->capture_default_str();
  add_common(evaluate_cmd, eval_c, false, false);

  // explain
  Common ex_c;
  DataArgs ex_d;
  std::string ex_model, ex_method, ex_model_id;
  ExplainOptions ex_opts;
  auto* explain_cmd = app.add_subcommand("explain", "Global feature importance of a model");
  explain_cmd->add_option("--model", ex_model, "model.json")->required()
      ->check(CLI::ExistingFile);
  add_data(explain_cmd, ex_d, true);
  explain_cmd->add_option("--method", ex_method, "mdi, mda, shap or lime")->required();
  explain_cmd->add_option("--model-id", ex_model_id, "Label stored in the importance file");
  explain_cmd->add_option("--mda-repeats", ex_opts.mda_repeats)->capture_default_str();
  explain_cmd->add_option("--lime-samples", ex_opts.lime.n_samples)->capture_default_str();
  explain_cmd->add_option("--lime-top-k", ex_opts.lime.top_k)->capture_default_str();
  explain_cmd->add_option("--lime-kernel-width", ex_opts.lime.kernel_width,
                          "0 selects 0.75*sqrt(features)")
      ->capture_default_str();
  explain_cmd->add_option("--lime-ridge", ex_opts.lime.ridge_lambda)->capture_default_str();
  add_common(explain_cmd, ex_c, false, true);

  // rank
  Common rank_c;
  std::string rank_importance, rank_policy = "threshold", rank_label;
  DiscretizePolicy policy;
  auto* rank_cmd = app.add_subcommand("rank", "Discretize importance scores into rank bands");
  rank_cmd->add_option("--importance", rank_importance, "Importance JSON")->required()
      ->check(CLI::ExistingFile);
  rank_cmd->add_option("--policy", rank_policy, "threshold or quantile")
      ->capture_default_str();
  rank_cmd->add_option("--t1", policy.t1)->capture_default_str();
  rank_cmd->add_option("--t2", policy.t2)->capture_default_str();
  rank_cmd->add_option("--floor", policy.floor)->capture_default_str();
  rank_cmd->add_option("--label", rank_label, "Defaults to METHOD-MODEL");
  add_common(rank_cmd, rank_c, false, true);

  // similarity
  Common sim_c;
  std::vector<std::string> sim_ranks;
  std::string sim_weights = WeightMap{}.to_string();
  auto* sim_cmd = app.add_subcommand("similarity", "Weighted Jaccard matrix of rank files");
  sim_cmd->add_option("--ranks", sim_ranks, "Two or more rank CSVs")->required()
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--weights", sim_weights, "Rank-to-weight map")->capture_default_str();
  add_common(sim_cmd, sim_c, false, true);

  // report
  Common rep_c;
  std::string rep_config;
  auto* report_cmd = app.add_subcommand("report", "Run the configured experiment grid");
  report_cmd->add_option("--config", rep_config, "Pipeline config")->required()
      ->check(CLI::ExistingFile);
  add_common(report_cmd, rep_c, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) {
      tp.kind = model_kind_from_string(model_kind);
      tp.bootstrap = !no_bootstrap;
      tp.seed = *train_c.seed;
      if (max_features == "sqrt") {
        tp.max_features = {MaxFeatures::Mode::kSqrt, 0};
      } else if (max_features == "all") {
        tp.max_features = {MaxFeatures::Mode::kAll, 0};
      } else {
        try {
          tp.max_features = {MaxFeatures::Mode::kCount, std::stoi(max_features)};
        } catch (const std::exception&) {
          throw ValidationError("--max-features must be sqrt, all or an integer");
        }
      }
      tp.validate();
      const auto avg = averaging_from_string(averaging);
      const Schema schema = load_schema(train_d.schema);
      Dataset d = load_csv(train_d.data, schema);
      if (!features_path.empty()) d = select_features(d, load_feature_set(features_path));
      const auto sp = split(d, test_fraction, *train_c.seed, !no_stratify);
      const EnsembleModel m = train_model(sp.train, tp);
      const auto report =
          evaluate(confusion(predict_rows(m, sp.test.values), sp.test.target), avg);

      const fs::path out(train_c.out);
      fs::create_directories(out);
      save_model_file(m, out / "model.json");
      write_text(out / "metrics.json", to_json(report).dump(2) + "\n");
      nlohmann::ordered_json split_doc;
      split_doc["seed"] = sp.seed;
      split_doc["test_fraction"] = sp.test_fraction;
      split_doc["stratify"] = !no_stratify;
      split_doc["train_rows"] = sp.train_rows;
      split_doc["test_rows"] = sp.test_rows;
      write_text(out / "split.json", split_doc.dump(2) + "\n");
      if (!train_c.quiet) print_report(report);
    } else if (evaluate_cmd->parsed()) {
      const EnsembleModel m = load_model_file(eval_model);
      const Dataset d = load_for_model(eval_d, m);
      const auto report = evaluate(confusion(predict_rows(m, d.values), d.target),
                                   averaging_from_string(eval_averaging));
      if (!eval_c.out.empty()) {
        fs::create_directories(eval_c.out);
        write_text(fs::path(eval_c.out) / "metrics.json", to_json(report).dump(2) + "\n");
      }
      if (!eval_c.quiet) print_report(report);
    } else if (explain_cmd->parsed()) {
      const XaiMethod method = xai_method_from_string(ex_method);
      if ((method == XaiMethod::kMda || method == XaiMethod::kLime) && !ex_c.seed) {
        throw ValidationError("--seed is required for method " + ex_method);
      }
      if (method == XaiMethod::kLime) ex_opts.lime.validate();
      ex_opts.seed = ex_c.seed.value_or(0);
      const EnsembleModel m = load_model_file(ex_model);
      const Dataset d = load_for_model(ex_d, m);
      const auto e = explain(m, d, method, ex_opts,
                             ex_model_id.empty() ? default_model_id(m) : ex_model_id);
      const fs::path out(ex_c.out);
      fs::create_directories(out);
      save_importance(e.importance, out / ("importance_" + to_string(method) + ".json"));
      if (e.shap) write_shap_csv(*e.shap, out / "shap_values.csv");
      if (!ex_c.quiet) {
        for (std::size_t i = 0; i < e.importance.features.size(); ++i) {
          std::printf("%-32s %.6f\n", e.importance.features[i].c_str(),
                      e.importance.scores[static_cast<Eigen::Index>(i)]);
        }
      }
    } else if (rank_cmd->parsed()) {
      if (rank_policy == "quantile") {
        policy.kind = DiscretizePolicy::Kind::kQuantile;
      } else if (rank_policy != "threshold") {
        throw ValidationError("--policy must be threshold or quantile");
      }
      const auto iv = floor_negatives(load_importance(rank_importance));
      const auto ra = discretize(iv, policy, rank_label);
      fs::path out(rank_c.out);
      if (fs::is_directory(out) || rank_c.out.back() == '/') {
        fs::create_directories(out);
        out /= ra.label + ".csv";
      } else if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
      }
      write_rank_csv(ra, out, {"source: " + rank_importance, policy.describe()});
      if (!rank_c.quiet) {
        for (std::size_t i = 0; i < ra.features.size(); ++i) {
          std::printf("%s,%s\n", ra.features[i].c_str(), to_string(ra.ranks[i]).c_str());
        }
      }
    } else if (sim_cmd->parsed()) {
      if (sim_ranks.size() < 2) throw ValidationError("--ranks needs at least two files");
      const WeightMap weights = WeightMap::parse(sim_weights);
      std::vector<RankAssignment> ranks;
      for (const auto& path : sim_ranks) ranks.push_back(load_rank_csv(path));
      const std::set<std::string> first(ranks[0].features.begin(), ranks[0].features.end());
      for (std::size_t i = 1; i < ranks.size(); ++i) {
        const std::set<std::string> other(ranks[i].features.begin(), ranks[i].features.end());
        if (other != first) {
          throw ValidationError("rank files " + sim_ranks[0] + " and " + sim_ranks[i] +
                                " have different feature universes");
        }
      }
      // The same file passed twice still gets distinct matrix labels.
      std::map<std::string, int> seen;
      for (auto& ra : ranks) {
        const int n = ++seen[ra.label];
        if (n > 1) ra.label += "#" + std::to_string(n);
      }
      std::vector<WeightVector> vectors;
      for (const auto& ra : ranks) vectors.push_back(ranks_to_weights(ra, weights));
      const auto sm = similarity_matrix(vectors);
      const fs::path out(sim_c.out);
      fs::create_directories(out);
      write_similarity_csv(sm, out / "similarity.csv");
      write_similarity_json(sm, out / "similarity.json");
      if (!sim_c.quiet) {
        std::ifstream in(out / "similarity.csv");
        std::cout << in.rdbuf();
      }
    } else if (report_cmd->parsed()) {
      PipelineConfig cfg = load_config(rep_config);
      if (rep_c.seed) cfg.seed = rep_c.seed;
      const auto result = run_report(cfg, rep_c.out, rep_c.quiet ? nullptr : &std::cerr);
      if (!rep_c.quiet) {
        std::printf("%d cells, %zu artifacts, manifest %s\n", result.cells,
                    result.manifest.artifacts.size(),
                    (result.output_dir / "manifest.json").string().c_str());
      }
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
