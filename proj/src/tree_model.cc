#include "treeconcord/tree_model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <utility>

#include "treeconcord/error.h"
#include "treeconcord/random.h"

namespace treeconcord {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kDecisionTree:
      return "dt";
    case ModelKind::kRandomForest:
      return "rf";
    case ModelKind::kGradientBoosting:
      return "gbt";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& text) {
  if (text == "dt") return ModelKind::kDecisionTree;
  if (text == "rf") return ModelKind::kRandomForest;
  if (text == "gbt" || text == "xgb") return ModelKind::kGradientBoosting;
  throw ValidationError("unknown model kind '" + text + "' (expected dt, rf or gbt)");
}

int MaxFeatures::resolve(int n_features) const {
  switch (mode) {
    case Mode::kAll:
      return n_features;
    case Mode::kSqrt:
      return std::max(1, static_cast<int>(std::ceil(std::sqrt(n_features))));
    case Mode::kCount:
      return std::clamp(count, 1, n_features);
  }
  return n_features;
}

void ModelParams::validate() const {
  if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
  if (min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be >= 1");
  if (kind != ModelKind::kDecisionTree && n_estimators < 1) {
    throw ValidationError("n_estimators must be >= 1");
  }
  if (max_features.mode == MaxFeatures::Mode::kCount && max_features.count < 1) {
    throw ValidationError("max_features must be >= 1");
  }
  if (kind == ModelKind::kGradientBoosting) {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
      throw ValidationError("learning_rate must lie in (0, 1]");
    }
    if (!(l2_lambda >= 0.0)) throw ValidationError("l2_lambda must be >= 0");
    if (!(min_gain >= 0.0)) throw ValidationError("min_gain must be >= 0");
  }
}

nlohmann::ordered_json params_to_json(const ModelParams& p) {
  nlohmann::ordered_json doc;
  doc["model_kind"] = to_string(p.kind);
  doc["max_depth"] = p.max_depth;
  doc["min_samples_leaf"] = p.min_samples_leaf;
  doc["n_estimators"] = p.n_estimators;
  switch (p.max_features.mode) {
    case MaxFeatures::Mode::kSqrt:
      doc["max_features"] = "sqrt";
      break;
    case MaxFeatures::Mode::kAll:
      doc["max_features"] = "all";
      break;
    case MaxFeatures::Mode::kCount:
      doc["max_features"] = p.max_features.count;
      break;
  }
  doc["bootstrap"] = p.bootstrap;
  doc["learning_rate"] = p.learning_rate;
  doc["l2_lambda"] = p.l2_lambda;
  doc["min_gain"] = p.min_gain;
  doc["seed"] = p.seed;
  return doc;
}

ModelParams params_from_json(const nlohmann::json& doc) {
  ModelParams p;
  try {
    p.kind = model_kind_from_string(doc.at("model_kind").get<std::string>());
    p.max_depth = doc.at("max_depth").get<int>();
    p.min_samples_leaf = doc.at("min_samples_leaf").get<int>();
    p.n_estimators = doc.at("n_estimators").get<int>();
    const auto& mf = doc.at("max_features");
    if (mf.is_string()) {
      const auto s = mf.get<std::string>();
      if (s == "sqrt") {
        p.max_features.mode = MaxFeatures::Mode::kSqrt;
      } else if (s == "all") {
        p.max_features.mode = MaxFeatures::Mode::kAll;
      } else {
        throw ValidationError("max_features must be 'sqrt', 'all' or an integer");
      }
    } else {
      p.max_features = {MaxFeatures::Mode::kCount, mf.get<int>()};
    }
    p.bootstrap = doc.at("bootstrap").get<bool>();
    p.learning_rate = doc.at("learning_rate").get<double>();
    p.l2_lambda = doc.at("l2_lambda").get<double>();
    p.min_gain = doc.at("min_gain").get<double>();
    p.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model params: ") + e.what());
  }
  p.validate();
  return p;
}

int Tree::depth() const {
  std::vector<int> depth_of(nodes.size(), 0);
  int deepest = 0;
  // Pre-order storage: children always follow their parent.
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    deepest = std::max(deepest, depth_of[i]);
    if (!n.is_leaf()) {
      depth_of[static_cast<std::size_t>(n.left)] = depth_of[i] + 1;
      depth_of[static_cast<std::size_t>(n.right)] = depth_of[i] + 1;
    }
  }
  return deepest;
}

int Tree::leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int index = 0;
  while (!nodes[static_cast<std::size_t>(index)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(index)];
    const double v = row[n.feature];
    index = (is_missing(v) || v <= n.threshold) ? n.left : n.right;
  }
  return index;
}

namespace {

// Gini impurity on class counts.
struct GiniCriterion {
  const Eigen::VectorXi& y;

  struct Stats {
    std::int64_t n = 0;
    std::int64_t pos = 0;
    Stats operator-(const Stats& o) const { return {n - o.n, pos - o.pos}; }
  };

  void add(Stats& s, Eigen::Index row) const {
    ++s.n;
    s.pos += y[row];
  }

  static double impurity(const Stats& s) {
    if (s.n == 0) return 0.0;
    const double p1 = static_cast<double>(s.pos) / static_cast<double>(s.n);
    const double p0 = 1.0 - p1;
    return 1.0 - (p0 * p0 + p1 * p1);
  }

  double gain(const Stats& parent, const Stats& left, const Stats& right) const {
    const double n = static_cast<double>(parent.n);
    const double g = impurity(parent) -
                     static_cast<double>(left.n) / n * impurity(left) -
                     static_cast<double>(right.n) / n * impurity(right);
    return std::max(0.0, g);
  }

  bool worth_splitting(const Stats& s) const { return s.pos > 0 && s.pos < s.n; }
  // Zero-gain splits are kept: an impure node whose best single split gains
  // nothing (XOR) can still separate at the next level.
  bool accept(double) const { return true; }

  void fill(const Stats& s, TreeNode& node) const {
    node.n_samples = s.n;
    node.impurity = impurity(s);
    node.value = static_cast<double>(s.pos) / static_cast<double>(s.n);
    node.class_counts = {s.n - s.pos, s.pos};
  }
};

// Second-order criterion for logistic boosting.
struct NewtonCriterion {
  const Eigen::VectorXi& y;
  const Eigen::VectorXd& grad;
  const Eigen::VectorXd& hess;
  double lambda;
  double gamma;

  struct Stats {
    std::int64_t n = 0;
    std::int64_t pos = 0;
    double g = 0.0;
    double h = 0.0;
    Stats operator-(const Stats& o) const { return {n - o.n, pos - o.pos, g - o.g, h - o.h}; }
  };

  void add(Stats& s, Eigen::Index row) const {
    ++s.n;
    s.pos += y[row];
    s.g += grad[row];
    s.h += hess[row];
  }

  double score(const Stats& s) const {
    const double denom = s.h + lambda;
    return denom > 0.0 ? s.g * s.g / denom : 0.0;
  }

  double gain(const Stats& parent, const Stats& left, const Stats& right) const {
    return 0.5 * (score(left) + score(right) - score(parent)) - gamma;
  }

  bool worth_splitting(const Stats&) const { return true; }
  bool accept(double gain) const { return gain > 0.0; }

  void fill(const Stats& s, TreeNode& node) const {
    node.n_samples = s.n;
    node.impurity = -0.5 * score(s);
    const double denom = s.h + lambda;
    node.value = denom > 0.0 ? -s.g / denom : 0.0;
    node.class_counts = {s.n - s.pos, s.pos};
  }
};

template <typename Criterion>
class TreeGrower {
 public:
  using Stats = typename Criterion::Stats;

  TreeGrower(const Eigen::MatrixXd& x, const Criterion& criterion,
             const ModelParams& params, int n_candidates, Rng* rng)
      : x_(x),
        criterion_(criterion),
        params_(params),
        n_candidates_(n_candidates),
        rng_(rng) {}

  Tree grow(std::vector<Eigen::Index> rows) {
    Tree tree;
    build(rows, 0, tree);
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
  };

  int build(const std::vector<Eigen::Index>& rows, int depth, Tree& tree) {
    Stats stats;
    for (const auto r : rows) criterion_.add(stats, r);

    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    criterion_.fill(stats, tree.nodes.back());

    const auto n = static_cast<std::int64_t>(rows.size());
    if (depth >= params_.max_depth || n < 2 * params_.min_samples_leaf ||
        !criterion_.worth_splitting(stats)) {
      return index;
    }
    const Split best = find_split(rows, stats);
    if (best.feature < 0 || !criterion_.accept(best.gain)) return index;

    std::vector<Eigen::Index> left;
    std::vector<Eigen::Index> right;
    for (const auto r : rows) {
      const double v = x_(r, best.feature);
      (is_missing(v) || v <= best.threshold ? left : right).push_back(r);
    }

    {
      auto& node = tree.nodes[static_cast<std::size_t>(index)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.gain = best.gain;
    }
    const int l = build(left, depth + 1, tree);
    const int r = build(right, depth + 1, tree);
    tree.nodes[static_cast<std::size_t>(index)].left = l;
    tree.nodes[static_cast<std::size_t>(index)].right = r;
    return index;
  }

  std::vector<int> candidate_features() {
    const int d = static_cast<int>(x_.cols());
    std::vector<int> features(static_cast<std::size_t>(d));
    std::iota(features.begin(), features.end(), 0);
    if (rng_ == nullptr || n_candidates_ >= d) return features;
    // Partial Fisher-Yates: the first n_candidates_ slots form the sample.
    for (int i = 0; i < n_candidates_; ++i) {
      const auto j = i + static_cast<int>(rng_->uniform_index(
                             static_cast<std::uint64_t>(d - i)));
      std::swap(features[static_cast<std::size_t>(i)],
                features[static_cast<std::size_t>(j)]);
    }
    features.resize(static_cast<std::size_t>(n_candidates_));
    std::sort(features.begin(), features.end());
    return features;
  }

  Split find_split(const std::vector<Eigen::Index>& rows, const Stats& parent) {
    Split best;
    const std::int64_t msl = params_.min_samples_leaf;
    std::vector<std::pair<double, Eigen::Index>> present;
    present.reserve(rows.size());

    for (const int j : candidate_features()) {
      Stats left;
      present.clear();
      for (const auto r : rows) {
        const double v = x_(r, j);
        if (is_missing(v)) {
          criterion_.add(left, r);
        } else {
          present.emplace_back(v, r);
        }
      }
      std::sort(present.begin(), present.end());
      for (std::size_t k = 0; k + 1 < present.size(); ++k) {
        criterion_.add(left, present[k].second);
        const double lo = present[k].first;
        const double hi = present[k + 1].first;
        if (lo == hi) continue;
        const std::int64_t n_left = left.n;
        if (n_left < msl || parent.n - n_left < msl) continue;
        const double gain = criterion_.gain(parent, left, parent - left);
        if (gain > best.gain) {
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold < hi)) threshold = lo;
          best = {j, threshold, gain};
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  Criterion criterion_;
  const ModelParams& params_;
  int n_candidates_;
  Rng* rng_;
};

void check_trainable(const Dataset& train, const ModelParams& p, ModelKind kind) {
  if (p.kind != kind) {
    throw ValidationError("model parameters are for '" + to_string(p.kind) +
                          "', trainer expects '" + to_string(kind) + "'");
  }
  p.validate();
  train.validate();
  if (train.row_count() == 0) throw ValidationError("training set is empty");
  if (p.min_samples_leaf > train.row_count()) {
    throw ValidationError("min_samples_leaf exceeds the number of training rows");
  }
}

std::vector<Eigen::Index> all_rows(const Dataset& d) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(d.row_count()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  return rows;
}

double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

EnsembleModel train_decision_tree(const Dataset& train, const ModelParams& p) {
  check_trainable(train, p, ModelKind::kDecisionTree);
  const GiniCriterion criterion{train.target};
  TreeGrower<GiniCriterion> grower(train.values, criterion, p,
                                   static_cast<int>(train.column_count()), nullptr);
  EnsembleModel m;
  m.aggregation = Aggregation::kSingle;
  m.params = p;
  m.feature_names = train.column_names();
  m.trees.push_back(grower.grow(all_rows(train)));
  return m;
}

EnsembleModel train_random_forest(const Dataset& train, const ModelParams& p) {
  check_trainable(train, p, ModelKind::kRandomForest);
  const GiniCriterion criterion{train.target};
  const int mtry = p.max_features.resolve(static_cast<int>(train.column_count()));
  const auto n = static_cast<std::uint64_t>(train.row_count());

  EnsembleModel m;
  m.aggregation = Aggregation::kVote;
  m.params = p;
  m.feature_names = train.column_names();
  m.trees.reserve(static_cast<std::size_t>(p.n_estimators));
  for (int t = 0; t < p.n_estimators; ++t) {
    // Each member owns a stream derived from (seed, member index), so the
    // forest does not depend on training order.
    Rng rng(derive_seed(p.seed, {static_cast<std::uint64_t>(t)}));
    std::vector<Eigen::Index> rows;
    if (p.bootstrap) {
      rows.reserve(n);
      for (std::uint64_t i = 0; i < n; ++i) {
        rows.push_back(static_cast<Eigen::Index>(rng.uniform_index(n)));
      }
      std::sort(rows.begin(), rows.end());
    } else {
      rows = all_rows(train);
    }
    TreeGrower<GiniCriterion> grower(train.values, criterion, p, mtry, &rng);
    m.trees.push_back(grower.grow(std::move(rows)));
  }
  return m;
}

EnsembleModel train_gradient_boosting(const Dataset& train, const ModelParams& p) {
  check_trainable(train, p, ModelKind::kGradientBoosting);
  const auto [negatives, positives] = train.class_counts();
  if (negatives == 0 || positives == 0) {
    throw ValidationError(
        "gradient boosting needs both classes in the training target");
  }

  EnsembleModel m;
  m.aggregation = Aggregation::kAdditiveLogit;
  m.params = p;
  m.learning_rate = p.learning_rate;
  m.feature_names = train.column_names();
  m.base_score = std::log(static_cast<double>(positives) /
                          static_cast<double>(negatives));

  const Eigen::Index n = train.row_count();
  Eigen::VectorXd margin = Eigen::VectorXd::Constant(n, m.base_score);
  Eigen::VectorXd grad(n);
  Eigen::VectorXd hess(n);
  const auto rows = all_rows(train);
  for (int round = 0; round < p.n_estimators; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double prob = sigmoid(margin[i]);
      grad[i] = prob - static_cast<double>(train.target[i]);
      hess[i] = prob * (1.0 - prob);
    }
    const NewtonCriterion criterion{train.target, grad, hess, p.l2_lambda, p.min_gain};
    TreeGrower<NewtonCriterion> grower(train.values, criterion, p,
                                       static_cast<int>(train.column_count()), nullptr);
    Tree tree = grower.grow(rows);
    for (Eigen::Index i = 0; i < n; ++i) {
      margin[i] += p.learning_rate * tree.predict(train.values.row(i));
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

EnsembleModel train_model(const Dataset& train, const ModelParams& p) {
  switch (p.kind) {
    case ModelKind::kDecisionTree:
      return train_decision_tree(train, p);
    case ModelKind::kRandomForest:
      return train_random_forest(train, p);
    case ModelKind::kGradientBoosting:
      return train_gradient_boosting(train, p);
  }
  throw ValidationError("unknown model kind");
}

namespace {

void check_arity(const EnsembleModel& m, Eigen::Index n_values) {
  if (m.trees.empty()) throw ValidationError("model has no trees");
  if (static_cast<std::size_t>(n_values) != m.n_features()) {
    throw ValidationError("row has " + std::to_string(n_values) +
                          " values, model expects " +
                          std::to_string(m.n_features()));
  }
}

}  // namespace

double raw_output(const EnsembleModel& m,
                  const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  check_arity(m, row.size());
  switch (m.aggregation) {
    case Aggregation::kSingle:
      return m.trees.front().predict(row);
    case Aggregation::kVote: {
      double sum = 0.0;
      for (const auto& t : m.trees) sum += t.predict(row);
      return sum / static_cast<double>(m.trees.size());
    }
    case Aggregation::kAdditiveLogit: {
      double sum = 0.0;
      for (const auto& t : m.trees) sum += t.predict(row);
      return m.base_score + m.learning_rate * sum;
    }
  }
  return 0.0;
}

double predict_proba(const EnsembleModel& m,
                     const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  check_arity(m, row.size());
  switch (m.aggregation) {
    case Aggregation::kSingle:
      return m.trees.front().predict(row);
    case Aggregation::kVote: {
      std::size_t votes = 0;
      for (const auto& t : m.trees) votes += t.predict(row) >= 0.5 ? 1 : 0;
      return static_cast<double>(votes) / static_cast<double>(m.trees.size());
    }
    case Aggregation::kAdditiveLogit:
      return sigmoid(raw_output(m, row));
  }
  return 0.0;
}

int predict(const EnsembleModel& m,
            const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double p = predict_proba(m, row);
  if (m.aggregation == Aggregation::kVote) return p > 0.5 ? 1 : 0;
  return p >= 0.5 ? 1 : 0;
}

Eigen::VectorXd predict_proba_rows(const EnsembleModel& m, const Eigen::MatrixXd& rows) {
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out[i] = predict_proba(m, rows.row(i));
  return out;
}

Eigen::VectorXi predict_rows(const EnsembleModel& m, const Eigen::MatrixXd& rows) {
  Eigen::VectorXi out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out[i] = predict(m, rows.row(i));
  return out;
}

double accuracy(const EnsembleModel& m, const Dataset& d) {
  if (d.row_count() == 0) throw ValidationError("accuracy of an empty dataset");
  const Eigen::VectorXi preds = predict_rows(m, d.values);
  return static_cast<double>((preds.array() == d.target.array()).count()) /
         static_cast<double>(d.row_count());
}

std::vector<double> staged_log_loss(const EnsembleModel& m, const Dataset& d) {
  if (m.aggregation != Aggregation::kAdditiveLogit) {
    throw ValidationError("staged log loss needs an additive model");
  }
  if (d.row_count() == 0) throw ValidationError("log loss of an empty dataset");
  Eigen::VectorXd margin = Eigen::VectorXd::Constant(d.row_count(), m.base_score);
  auto mean_loss = [&] {
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.row_count(); ++i) {
      total += softplus(d.target[i] == 1 ? -margin[i] : margin[i]);
    }
    return total / static_cast<double>(d.row_count());
  };
  std::vector<double> losses{mean_loss()};
  for (const auto& t : m.trees) {
    for (Eigen::Index i = 0; i < d.row_count(); ++i) {
      margin[i] += m.learning_rate * t.predict(d.values.row(i));
    }
    losses.push_back(mean_loss());
  }
  return losses;
}

namespace {

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::kSingle:
      return "single";
    case Aggregation::kVote:
      return "vote";
    case Aggregation::kAdditiveLogit:
      return "additive_logit";
  }
  return "?";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "single") return Aggregation::kSingle;
  if (s == "vote") return Aggregation::kVote;
  if (s == "additive_logit") return Aggregation::kAdditiveLogit;
  throw ValidationError("unknown model kind '" + s + "'");
}

nlohmann::ordered_json node_to_json(const Tree& tree, int index,
                                    const std::vector<std::string>& names) {
  const auto& n = tree.nodes[static_cast<std::size_t>(index)];
  nlohmann::ordered_json doc;
  if (n.is_leaf()) {
    doc["value"] = n.value;
    doc["n_samples"] = n.n_samples;
    doc["class_counts"] = {n.class_counts[0], n.class_counts[1]};
    return doc;
  }
  doc["feature"] = names[static_cast<std::size_t>(n.feature)];
  doc["threshold"] = n.threshold;
  doc["n_samples"] = n.n_samples;
  doc["impurity"] = n.impurity;
  doc["gain"] = n.gain;
  doc["left"] = node_to_json(tree, n.left, names);
  doc["right"] = node_to_json(tree, n.right, names);
  return doc;
}

int node_from_json(const nlohmann::json& doc, const std::vector<std::string>& names,
                   Aggregation aggregation, Tree& tree) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (!doc.contains("feature")) {
    if (!doc.contains("value")) {
      throw ValidationError("malformed node: neither a split nor a leaf");
    }
    auto& leaf = tree.nodes.back();
    leaf.value = doc.at("value").get<double>();
    leaf.n_samples = doc.at("n_samples").get<std::int64_t>();
    const auto counts = doc.at("class_counts").get<std::vector<std::int64_t>>();
    if (counts.size() != 2) throw ValidationError("malformed node: class_counts");
    leaf.class_counts = {counts[0], counts[1]};
    return index;
  }
  if (!doc.contains("left") || !doc.contains("right")) {
    throw ValidationError("malformed node: internal node missing a child");
  }
  const auto feature = doc.at("feature").get<std::string>();
  const auto it = std::find(names.begin(), names.end(), feature);
  if (it == names.end()) {
    throw ValidationError("malformed node: unknown feature '" + feature + "'");
  }
  {
    auto& node = tree.nodes.back();
    node.feature = static_cast<int>(it - names.begin());
    node.threshold = doc.at("threshold").get<double>();
    node.n_samples = doc.at("n_samples").get<std::int64_t>();
    node.impurity = doc.at("impurity").get<double>();
    node.gain = doc.at("gain").get<double>();
  }
  const int l = node_from_json(doc.at("left"), names, aggregation, tree);
  const int r = node_from_json(doc.at("right"), names, aggregation, tree);
  auto& node = tree.nodes[static_cast<std::size_t>(index)];
  node.left = l;
  node.right = r;
  const auto& lc = tree.nodes[static_cast<std::size_t>(l)].class_counts;
  const auto& rc = tree.nodes[static_cast<std::size_t>(r)].class_counts;
  node.class_counts = {lc[0] + rc[0], lc[1] + rc[1]};
  const auto total = node.class_counts[0] + node.class_counts[1];
  if (aggregation != Aggregation::kAdditiveLogit && total > 0) {
    node.value = static_cast<double>(node.class_counts[1]) / static_cast<double>(total);
  }
  return index;
}

}  // namespace

nlohmann::ordered_json save_model(const EnsembleModel& m) {
  nlohmann::ordered_json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["kind"] = to_string(m.aggregation);
  doc["params"] = params_to_json(m.params);
  doc["base_score"] = m.base_score;
  doc["learning_rate"] = m.learning_rate;
  doc["feature_names"] = m.feature_names;
  auto& trees = doc["trees"] = nlohmann::ordered_json::array();
  for (const auto& t : m.trees) trees.push_back(node_to_json(t, 0, m.feature_names));
  return doc;
}

EnsembleModel load_model(const nlohmann::json& doc) {
  EnsembleModel m;
  try {
    const auto& version = doc.at("format_version");
    const std::string v = version.is_string() ? version.get<std::string>() : version.dump();
    if (v != kModelFormatVersion) {
      throw ValidationError("unsupported model format version '" + v +
                            "' (expected '" + kModelFormatVersion + "')");
    }
    m.aggregation = aggregation_from_string(doc.at("kind").get<std::string>());
    m.params = params_from_json(doc.at("params"));
    m.base_score = doc.at("base_score").get<double>();
    m.learning_rate = doc.at("learning_rate").get<double>();
    m.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    for (const auto& t : doc.at("trees")) {
      Tree tree;
      node_from_json(t, m.feature_names, m.aggregation, tree);
      m.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
  if (m.trees.empty()) throw ValidationError("malformed model: no trees");
  return m;
}

void save_model_file(const EnsembleModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << save_model(m).dump(2) << '\n';
}

EnsembleModel load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model " + path.string() + ": " + e.what());
  }
  return load_model(doc);
}

}  // namespace treeconcord
