#ifndef TREECONCORD_TREE_MODEL_H_
#define TREECONCORD_TREE_MODEL_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "treeconcord/tabular.h"

namespace treeconcord {

enum class ModelKind { kDecisionTree, kRandomForest, kGradientBoosting };

// "dt", "rf", "gbt".
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& text);

// Number of candidate features drawn at each random forest split.
struct MaxFeatures {
  enum class Mode { kSqrt, kAll, kCount };
  Mode mode = Mode::kSqrt;
  int count = 0;

  int resolve(int n_features) const;
  bool operator==(const MaxFeatures&) const = default;
};

struct ModelParams {
  ModelKind kind = ModelKind::kDecisionTree;
  int max_depth = 3;
  int min_samples_leaf = 1;
  int n_estimators = 100;          // rf, gbt
  MaxFeatures max_features;        // rf
  bool bootstrap = true;           // rf
  double learning_rate = 0.3;      // gbt
  double l2_lambda = 1.0;          // gbt
  double min_gain = 0.0;           // gbt
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelParams&) const = default;
};

nlohmann::ordered_json params_to_json(const ModelParams& p);
ModelParams params_from_json(const nlohmann::json& doc);

struct TreeNode {
  // Internal nodes: split feature (column index into feature_names). Leaves
  // hold -1.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::int64_t n_samples = 0;
  // Gini impurity for classification trees; for boosted trees the node's
  // optimal objective -G^2 / (2 (H + lambda)).
  double impurity = 0.0;
  double gain = 0.0;
  // Class-1 probability (classification) or additive logit weight (boosting).
  double value = 0.0;
  std::array<std::int64_t, 2> class_counts{0, 0};

  bool is_leaf() const { return feature < 0; }
};

// Nodes stored in pre-order; nodes[0] is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& root() const { return nodes.front(); }
  int depth() const;
  // Index of the leaf reached by `row`. Missing values and values
  // <= threshold go left.
  int leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return nodes[static_cast<std::size_t>(leaf_index(row))].value;
  }
};

enum class Aggregation { kSingle, kVote, kAdditiveLogit };

struct EnsembleModel {
  Aggregation aggregation = Aggregation::kSingle;
  std::vector<Tree> trees;
  double base_score = 0.0;
  double learning_rate = 1.0;
  ModelParams params;
  std::vector<std::string> feature_names;

  std::size_t n_features() const { return feature_names.size(); }
};

EnsembleModel train_decision_tree(const Dataset& train, const ModelParams& p);
EnsembleModel train_random_forest(const Dataset& train, const ModelParams& p);
EnsembleModel train_gradient_boosting(const Dataset& train, const ModelParams& p);
// Dispatches on p.kind.
EnsembleModel train_model(const Dataset& train, const ModelParams& p);

// Output that explanations decompose: leaf probability (single), mean leaf
// probability over trees (vote), or the logit margin (additive).
double raw_output(const EnsembleModel& m,
                  const Eigen::Ref<const Eigen::RowVectorXd>& row);

// Class-1 probability. Vote ensembles report the fraction of trees voting 1.
double predict_proba(const EnsembleModel& m,
                     const Eigen::Ref<const Eigen::RowVectorXd>& row);

// Class 1 iff predict_proba >= 0.5, except vote ensembles which need a strict
// majority of trees; a tied vote yields class 0.
int predict(const EnsembleModel& m,
            const Eigen::Ref<const Eigen::RowVectorXd>& row);

Eigen::VectorXd predict_proba_rows(const EnsembleModel& m, const Eigen::MatrixXd& rows);
Eigen::VectorXi predict_rows(const EnsembleModel& m, const Eigen::MatrixXd& rows);

// Fraction of rows where predict() matches the target.
double accuracy(const EnsembleModel& m, const Dataset& d);

// Mean logistic loss of an additive model after 0, 1, ..., n trees.
std::vector<double> staged_log_loss(const EnsembleModel& m, const Dataset& d);

inline constexpr const char* kModelFormatVersion = "1";

nlohmann::ordered_json save_model(const EnsembleModel& m);
EnsembleModel load_model(const nlohmann::json& doc);

void save_model_file(const EnsembleModel& m, const std::filesystem::path& path);
EnsembleModel load_model_file(const std::filesystem::path& path);

}  // namespace treeconcord

#endif  // TREECONCORD_TREE_MODEL_H_
