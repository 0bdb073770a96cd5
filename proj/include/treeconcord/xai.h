#ifndef TREECONCORD_XAI_H_
#define TREECONCORD_XAI_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "treeconcord/tabular.h"
#include "treeconcord/tree_model.h"

namespace treeconcord {

enum class XaiMethod { kMdi, kMda, kShap, kLime };

std::string to_string(XaiMethod method);
XaiMethod xai_method_from_string(const std::string& text);

// Per-feature importance scores, aligned with `features`.
struct ImportanceVector {
  XaiMethod method = XaiMethod::kMdi;
  std::string model_id;
  std::vector<std::string> features;
  Eigen::VectorXd scores;
  bool normalized = false;

  double score(const std::string& feature) const;
};

nlohmann::ordered_json to_json(const ImportanceVector& iv);
ImportanceVector importance_from_json(const nlohmann::ordered_json& doc);
void save_importance(const ImportanceVector& iv, const std::filesystem::path& path);
ImportanceVector load_importance(const std::filesystem::path& path);

// Mean decrease in impurity. Classification trees weight each split's Gini
// gain by its share of the root samples; boosted trees use the raw structure
// gain. Per-tree sums are averaged over the ensemble and normalized to sum 1
// when any split exists.
ImportanceVector mdi(const EnsembleModel& m);

// Permutation importance: mean drop in accuracy when one column is shuffled.
// Negative means are kept. Shuffles are seeded per (feature, repeat).
ImportanceVector mda(const EnsembleModel& m, const Dataset& d, int n_repeats,
                     std::uint64_t seed);

// Per-instance additive attributions. For every row,
// values.row(i).sum() + base_value == raw_output(m, row i).
struct ShapMatrix {
  std::vector<std::string> features;
  Eigen::MatrixXd values;  // rows x features
  double base_value = 0.0;
};

// Path-dependent tree Shapley values of one tree, conditioning on node
// covers (n_samples). Adds into `phi` (size = number of features).
void tree_shap(const Tree& tree, const Eigen::Ref<const Eigen::RowVectorXd>& row,
               double scale, Eigen::Ref<Eigen::VectorXd> phi);

// Cover-weighted mean leaf value of one tree.
double tree_expected_value(const Tree& tree);

// Explains raw_output(): leaf probability (single), mean per-tree leaf
// probability (vote), or the logit margin (additive).
ShapMatrix shap_values(const EnsembleModel& m, const Dataset& d);

// Mean absolute attribution per feature.
ImportanceVector shap_global(const ShapMatrix& sm);

// One row per instance, one column per feature, final column base_value.
void write_shap_csv(const ShapMatrix& sm, const std::filesystem::path& path);

struct LimeConfig {
  int n_samples = 1000;
  // <= 0 selects 0.75 * sqrt(number of features).
  double kernel_width = 0.0;
  int top_k = 3;
  double ridge_lambda = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const LimeConfig&) const = default;
};

inline constexpr double kNegligibleWeight = 1e-12;

struct LimeExplanation {
  Eigen::Index instance_id = 0;
  // Surrogate coefficient of every feature's "same bin as the instance"
  // indicator.
  Eigen::VectorXd coefficients;
  // Up to top_k features with the largest |coefficient|, strongest first.
  // Coefficients with magnitude <= kNegligibleWeight are never retained.
  std::vector<std::pair<std::string, double>> feature_weights;
  double intercept = 0.0;
  double kernel_width = 0.0;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

// Interpretable bins of each feature, derived from a background dataset:
// quartile edges for numeric columns, categories for ordinal ones. Missing
// values form their own bin.
class LimeBinning {
 public:
  explicit LimeBinning(const Dataset& background);
  int bin(Eigen::Index feature, double value) const;

 private:
  std::vector<ColumnKind> kinds_;
  std::vector<std::array<double, 3>> quartiles_;
};

// Local surrogate around `instance`. Perturbations draw each
// feature independently from the background column; the interpretable bit is
// 1 when the draw lands in the instance's bin. Samples are weighted by
// exp(-D^2 / width^2), D the Hamming distance to the instance in bit space,
// and a ridge regression is fit to predict_proba.
LimeExplanation lime_local(const EnsembleModel& m, const Dataset& background,
                           const Eigen::Ref<const Eigen::RowVectorXd>& instance,
                           const LimeConfig& cfg, Eigen::Index instance_id = 0);

// Fraction of instances of `d` whose local top-k contains each feature. The
// local explanation of row i is seeded from (cfg.seed, i).
ImportanceVector lime_global(const EnsembleModel& m, const Dataset& d,
                             const LimeConfig& cfg);

}  // namespace treeconcord

#endif  // TREECONCORD_XAI_H_
