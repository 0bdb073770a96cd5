#ifndef TREECONCORD_PIPELINE_H_
#define TREECONCORD_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeconcord/concordance.h"
#include "treeconcord/metrics.h"
#include "treeconcord/tree_model.h"
#include "treeconcord/xai.h"

namespace treeconcord {

inline constexpr const char* kToolVersion = "1.0.0";

struct ModelSpec {
  std::string name;  // Display name and rank label suffix, e.g. "DT".
  ModelParams params;
  // Parameters for individual feature sets, keyed by feature-set name. Sets
  // not listed use `params`.
  std::map<std::string, ModelParams> per_set;

  const ModelParams& params_for(const std::string& feature_set) const;
  bool operator==(const ModelSpec&) const = default;
};

struct ReferenceSpec {
  std::string name;                          // e.g. "Guidelines".
  std::map<std::string, std::string> paths;  // feature-set name -> rank CSV.
  bool operator==(const ReferenceSpec&) const = default;
};

// Experiment grid read from a sectioned key-value file:
//
//   [run]
//   data = cases.csv
//   schema = schema.json
//   seed = 42
//   feature_sets = minimum.txt, recommended.txt
//   methods = mdi, mda, shap, lime
//
//   [model DT]
//   kind = dt
//   max_depth = 3
//   minimum.min_samples_leaf = 5
//
//   [reference Guidelines]
//   minimum = guidelines_minimum.csv
//
// '#' and ';' start comment lines. Relative paths resolve against the
// directory of the config file.
struct PipelineConfig {
  std::string data;
  std::string schema;
  std::string target;  // Overrides the schema's target when set.
  std::vector<std::string> feature_sets;
  std::string abbreviations;
  std::optional<std::uint64_t> seed;
  std::string output = "report";
  double test_fraction = 0.3;
  bool stratify = true;
  std::vector<XaiMethod> methods{XaiMethod::kMdi, XaiMethod::kMda, XaiMethod::kShap,
                                 XaiMethod::kLime};
  Averaging averaging = Averaging::kWeighted;
  DiscretizePolicy policy;
  WeightMap weights;
  int mda_repeats = 10;
  LimeConfig lime;  // lime.seed is ignored; the run seed is used.
  std::vector<ModelSpec> models;
  std::vector<ReferenceSpec> references;

  std::filesystem::path base_dir;  // Not serialized.

  std::filesystem::path resolve(const std::string& path) const;

  // Checks values, that every referenced file exists, and that per-set
  // overrides and references name configured feature sets. Loads nothing
  // beyond the feature-set files.
  void validate() const;

  bool operator==(const PipelineConfig& other) const;
};

PipelineConfig parse_config(const std::string& text,
                            const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_text(const PipelineConfig& cfg);

// "md=3, msl=5" for single trees and forests, "md=2, ne=50" for boosting.
std::string params_summary(const ModelParams& p);

struct ExplainOptions {
  int mda_repeats = 10;
  LimeConfig lime;
  std::uint64_t seed = 0;  // Drives MDA shuffles and LIME sampling.
};

struct Explanation {
  ImportanceVector importance;
  std::optional<ShapMatrix> shap;  // Set for XaiMethod::kShap.
};

// One global importance vector for `method`, computed on `data` (ignored by
// MDI). The vector's model_id is set to `model_id`.
Explanation explain(const EnsembleModel& m, const Dataset& data, XaiMethod method,
                    const ExplainOptions& opts, const std::string& model_id);

struct ArtifactRecord {
  std::string path;  // Relative to the output directory, '/' separated.
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string config_sha256;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  std::string status;  // "complete" or "failed".
  std::string error;
  std::vector<ArtifactRecord> artifacts;

  nlohmann::ordered_json to_json() const;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct ReportResult {
  RunManifest manifest;
  std::filesystem::path output_dir;
  int cells = 0;
};

// Runs the full grid: for every feature set and model, trains, evaluates on
// the holdout, explains, discretizes, and compares against the references.
// On failure the manifest lists the artifacts completed so far and the error
// is rethrown. `log` receives one progress line per step; may be null.
ReportResult run_report(const PipelineConfig& cfg,
                        const std::filesystem::path& output_override = {},
                        std::ostream* log = nullptr);

}  // namespace treeconcord

#endif  // TREECONCORD_PIPELINE_H_
