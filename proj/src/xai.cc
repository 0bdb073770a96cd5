#include "treeconcord/xai.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "treeconcord/csv.h"
#include "treeconcord/error.h"
#include "treeconcord/random.h"

namespace treeconcord {

std::string to_string(XaiMethod method) {
  switch (method) {
    case XaiMethod::kMdi:
      return "mdi";
    case XaiMethod::kMda:
      return "mda";
    case XaiMethod::kShap:
      return "shap";
    case XaiMethod::kLime:
      return "lime";
  }
  return "?";
}

XaiMethod xai_method_from_string(const std::string& text) {
  if (text == "mdi") return XaiMethod::kMdi;
  if (text == "mda") return XaiMethod::kMda;
  if (text == "shap") return XaiMethod::kShap;
  if (text == "lime") return XaiMethod::kLime;
  throw ValidationError("unknown explainability method '" + text +
                        "' (expected mdi, mda, shap or lime)");
}

double ImportanceVector::score(const std::string& feature) const {
  const auto it = std::find(features.begin(), features.end(), feature);
  if (it == features.end()) throw ValidationError("no score for '" + feature + "'");
  return scores[it - features.begin()];
}

nlohmann::ordered_json to_json(const ImportanceVector& iv) {
  nlohmann::ordered_json doc;
  doc["method"] = to_string(iv.method);
  doc["model_id"] = iv.model_id;
  doc["normalized"] = iv.normalized;
  doc["scores"] = nlohmann::ordered_json::object();
  for (std::size_t j = 0; j < iv.features.size(); ++j) {
    doc["scores"][iv.features[j]] = iv.scores[static_cast<Eigen::Index>(j)];
  }
  return doc;
}

ImportanceVector importance_from_json(const nlohmann::ordered_json& doc) {
  ImportanceVector iv;
  try {
    iv.method = xai_method_from_string(doc.at("method").get<std::string>());
    iv.model_id = doc.at("model_id").get<std::string>();
    iv.normalized = doc.at("normalized").get<bool>();
    const auto& scores = doc.at("scores");
    if (!scores.is_object()) throw ValidationError("importance scores must be an object");
    iv.scores.resize(static_cast<Eigen::Index>(scores.size()));
    Eigen::Index j = 0;
    for (const auto& [feature, value] : scores.items()) {
      iv.features.push_back(feature);
      iv.scores[j++] = value.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed importance vector: ") + e.what());
  }
  return iv;
}

void save_importance(const ImportanceVector& iv, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << to_json(iv).dump(2) << '\n';
}

ImportanceVector load_importance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open importance file: " + path.string());
  nlohmann::ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("importance file " + path.string() + ": " + e.what());
  }
  return importance_from_json(doc);
}

namespace {

// Columns of `d` arranged in the model's feature order.
Dataset align(const EnsembleModel& m, const Dataset& d) {
  if (d.column_names() == m.feature_names) return d;
  return select_features(d, m.feature_names);
}

}  // namespace

ImportanceVector mdi(const EnsembleModel& m) {
  const auto d = static_cast<Eigen::Index>(m.n_features());
  Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
  const bool weight_by_samples = m.aggregation != Aggregation::kAdditiveLogit;
  for (const auto& tree : m.trees) {
    const auto root_n = static_cast<double>(tree.root().n_samples);
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const double w =
          weight_by_samples ? static_cast<double>(node.n_samples) / root_n : 1.0;
      total[node.feature] += w * node.gain;
    }
  }
  if (!m.trees.empty()) total /= static_cast<double>(m.trees.size());

  ImportanceVector iv;
  iv.method = XaiMethod::kMdi;
  iv.features = m.feature_names;
  const double sum = total.sum();
  if (sum > 0.0) {
    iv.scores = total / sum;
    iv.normalized = true;
  } else {
    iv.scores = total;
  }
  return iv;
}

ImportanceVector mda(const EnsembleModel& m, const Dataset& data, int n_repeats,
                     std::uint64_t seed) {
  if (n_repeats < 1) throw ValidationError("n_repeats must be >= 1");
  if (data.row_count() == 0) throw ValidationError("permutation importance needs rows");
  const Dataset d = align(m, data);

  auto accuracy_of = [&](const Eigen::MatrixXd& x) {
    const Eigen::VectorXi preds = predict_rows(m, x);
    return static_cast<double>((preds.array() == d.target.array()).count()) /
           static_cast<double>(d.row_count());
  };
  const double baseline = accuracy_of(d.values);

  ImportanceVector iv;
  iv.method = XaiMethod::kMda;
  iv.features = m.feature_names;
  iv.scores = Eigen::VectorXd::Zero(d.column_count());
  Eigen::MatrixXd shuffled = d.values;
  std::vector<double> column(static_cast<std::size_t>(d.row_count()));
  for (Eigen::Index j = 0; j < d.column_count(); ++j) {
    double drop = 0.0;
    for (int r = 0; r < n_repeats; ++r) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(j),
                                 static_cast<std::uint64_t>(r)}));
      for (Eigen::Index i = 0; i < d.row_count(); ++i) {
        column[static_cast<std::size_t>(i)] = d.values(i, j);
      }
      rng.shuffle(std::span<double>(column));
      for (Eigen::Index i = 0; i < d.row_count(); ++i) {
        shuffled(i, j) = column[static_cast<std::size_t>(i)];
      }
      drop += baseline - accuracy_of(shuffled);
    }
    shuffled.col(j) = d.values.col(j);
    iv.scores[j] = drop / static_cast<double>(n_repeats);
  }
  return iv;
}

namespace {

struct PathElement {
  int feature;
  double zero_fraction;  // Share of the cover flowing this way.
  double one_fraction;   // 1 if the instance flows this way, else 0.
  double weight;         // Permutation weight of subsets of this size.
};

using Path = std::vector<PathElement>;

void extend_path(Path& path, double zero_fraction, double one_fraction, int feature) {
  const std::size_t depth = path.size();
  path.push_back({feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0});
  const double denom = static_cast<double>(depth + 1);
  for (std::size_t k = depth; k-- > 0;) {
    path[k + 1].weight += one_fraction * path[k].weight * static_cast<double>(k + 1) / denom;
    path[k].weight = zero_fraction * path[k].weight * static_cast<double>(depth - k) / denom;
  }
}

// Removes element `index`, undoing its extend_path.
void unwind_path(Path& path, std::size_t index) {
  const std::size_t last = path.size() - 1;
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  const double denom = static_cast<double>(last + 1);
  double carry = path[last].weight;
  for (std::size_t k = last; k-- > 0;) {
    if (one != 0.0) {
      const double saved = path[k].weight;
      path[k].weight = carry * denom / (static_cast<double>(k + 1) * one);
      carry = saved - path[k].weight * zero * static_cast<double>(last - k) / denom;
    } else {
      path[k].weight = path[k].weight * denom / (zero * static_cast<double>(last - k));
    }
  }
  for (std::size_t k = index; k < last; ++k) {
    path[k].feature = path[k + 1].feature;
    path[k].zero_fraction = path[k + 1].zero_fraction;
    path[k].one_fraction = path[k + 1].one_fraction;
  }
  path.pop_back();
}

// Total permutation weight of the path with element `index` removed.
double unwound_weight(const Path& path, std::size_t index) {
  const std::size_t last = path.size() - 1;
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double total = 0.0;
  if (one != 0.0) {
    double carry = path[last].weight;
    for (std::size_t k = last; k-- > 0;) {
      const double part = carry / (static_cast<double>(k + 1) * one);
      total += part;
      carry = path[k].weight - part * zero * static_cast<double>(last - k);
    }
  } else {
    for (std::size_t k = last; k-- > 0;) {
      total += path[k].weight / (zero * static_cast<double>(last - k));
    }
  }
  return total * static_cast<double>(last + 1);
}

void shap_recurse(const Tree& tree, int node_index,
                  const Eigen::Ref<const Eigen::RowVectorXd>& row, double scale,
                  Path path, double zero_fraction, double one_fraction, int feature,
                  Eigen::Ref<Eigen::VectorXd> phi) {
  extend_path(path, zero_fraction, one_fraction, feature);
  const auto& node = tree.nodes[static_cast<std::size_t>(node_index)];
  if (node.is_leaf()) {
    for (std::size_t k = 1; k < path.size(); ++k) {
      const double w = unwound_weight(path, k);
      phi[path[k].feature] +=
          scale * w * (path[k].one_fraction - path[k].zero_fraction) * node.value;
    }
    return;
  }

  const double v = row[node.feature];
  const bool goes_left = is_missing(v) || v <= node.threshold;
  const int hot = goes_left ? node.left : node.right;
  const int cold = goes_left ? node.right : node.left;

  double incoming_zero = 1.0;
  double incoming_one = 1.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    if (path[k].feature == node.feature) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, k);
      break;
    }
  }

  const auto cover = static_cast<double>(node.n_samples);
  const auto hot_cover = static_cast<double>(tree.nodes[static_cast<std::size_t>(hot)].n_samples);
  const auto cold_cover = static_cast<double>(tree.nodes[static_cast<std::size_t>(cold)].n_samples);
  shap_recurse(tree, hot, row, scale, path, incoming_zero * hot_cover / cover,
               incoming_one, node.feature, phi);
  if (cold_cover > 0.0) {
    shap_recurse(tree, cold, row, scale, std::move(path),
                 incoming_zero * cold_cover / cover, 0.0, node.feature, phi);
  }
}

}  // namespace

void tree_shap(const Tree& tree, const Eigen::Ref<const Eigen::RowVectorXd>& row,
               double scale, Eigen::Ref<Eigen::VectorXd> phi) {
  if (tree.nodes.empty()) throw ValidationError("cannot explain an empty tree");
  if (tree.root().is_leaf()) return;
  Path path;
  path.reserve(32);
  shap_recurse(tree, 0, row, scale, std::move(path), 1.0, 1.0, -1, phi);
}

double tree_expected_value(const Tree& tree) {
  if (tree.nodes.empty()) throw ValidationError("cannot explain an empty tree");
  const auto root_cover = static_cast<double>(tree.root().n_samples);
  double sum = 0.0;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) sum += node.value * static_cast<double>(node.n_samples);
  }
  return root_cover > 0.0 ? sum / root_cover : 0.0;
}

ShapMatrix shap_values(const EnsembleModel& m, const Dataset& data) {
  if (m.trees.empty()) throw ValidationError("cannot explain an unfitted model");
  const Dataset d = align(m, data);

  double scale = 1.0;
  double offset = 0.0;
  switch (m.aggregation) {
    case Aggregation::kSingle:
      break;
    case Aggregation::kVote:
      scale = 1.0 / static_cast<double>(m.trees.size());
      break;
    case Aggregation::kAdditiveLogit:
      scale = m.learning_rate;
      offset = m.base_score;
      break;
  }

  ShapMatrix sm;
  sm.features = m.feature_names;
  sm.base_value = offset;
  for (const auto& tree : m.trees) sm.base_value += scale * tree_expected_value(tree);

  sm.values = Eigen::MatrixXd::Zero(d.row_count(), d.column_count());
  Eigen::VectorXd phi(d.column_count());
  for (Eigen::Index i = 0; i < d.row_count(); ++i) {
    phi.setZero();
    for (const auto& tree : m.trees) tree_shap(tree, d.values.row(i), scale, phi);
    sm.values.row(i) = phi.transpose();
  }
  return sm;
}

ImportanceVector shap_global(const ShapMatrix& sm) {
  if (sm.values.rows() == 0) throw ValidationError("empty SHAP matrix");
  ImportanceVector iv;
  iv.method = XaiMethod::kShap;
  iv.features = sm.features;
  iv.scores = sm.values.cwiseAbs().colwise().mean().transpose();
  return iv;
}

void write_shap_csv(const ShapMatrix& sm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  csv::Record header = sm.features;
  header.emplace_back("base_value");
  out << csv::join(header) << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < sm.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < sm.values.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g,", sm.values(i, j));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", sm.base_value);
    out << buf << '\n';
  }
}

void LimeConfig::validate() const {
  if (top_k < 1) throw ValidationError("LIME top_k must be >= 1");
  if (n_samples < 10 * top_k) {
    throw ValidationError("LIME needs n_samples >= 10 * k (" +
                          std::to_string(10 * top_k) + "), got " +
                          std::to_string(n_samples));
  }
  if (!(ridge_lambda >= 0.0)) throw ValidationError("LIME ridge lambda must be >= 0");
}

namespace {

// Linear-interpolated quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

constexpr Eigen::Index kMinBackgroundRows = 8;

}  // namespace

LimeBinning::LimeBinning(const Dataset& background) {
  if (background.row_count() < kMinBackgroundRows) {
    throw ValidationError("LIME background needs at least 8 rows to form bins");
  }
  for (Eigen::Index j = 0; j < background.column_count(); ++j) {
    const auto kind = background.columns[static_cast<std::size_t>(j)].kind;
    kinds_.push_back(kind);
    std::array<double, 3> edges{0.0, 0.0, 0.0};
    if (kind == ColumnKind::kNumeric) {
      std::vector<double> present;
      for (Eigen::Index i = 0; i < background.row_count(); ++i) {
        if (!is_missing(background.values(i, j))) present.push_back(background.values(i, j));
      }
      if (!present.empty()) {
        std::sort(present.begin(), present.end());
        edges = {quantile(present, 0.25), quantile(present, 0.5), quantile(present, 0.75)};
      }
    }
    quartiles_.push_back(edges);
  }
}

int LimeBinning::bin(Eigen::Index feature, double value) const {
  if (is_missing(value)) return -1;
  const auto f = static_cast<std::size_t>(feature);
  if (kinds_[f] == ColumnKind::kOrdinal) return static_cast<int>(value);
  const auto& q = quartiles_[f];
  return static_cast<int>(std::count_if(q.begin(), q.end(), [&](double e) { return value > e; }));
}

LimeExplanation lime_local(const EnsembleModel& m, const Dataset& background_data,
                           const Eigen::Ref<const Eigen::RowVectorXd>& instance,
                           const LimeConfig& cfg, Eigen::Index instance_id) {
  cfg.validate();
  const Dataset background = align(m, background_data);
  const Eigen::Index d = background.column_count();
  if (instance.size() != d) {
    throw ValidationError("LIME instance does not match the model's features");
  }
  const LimeBinning binning(background);

  LimeExplanation ex;
  ex.instance_id = instance_id;
  ex.n_samples = cfg.n_samples;
  ex.seed = cfg.seed;
  ex.kernel_width =
      cfg.kernel_width > 0.0 ? cfg.kernel_width : 0.75 * std::sqrt(static_cast<double>(d));

  std::vector<int> instance_bins(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    instance_bins[static_cast<std::size_t>(j)] = binning.bin(j, instance[j]);
  }

  const Eigen::Index n = cfg.n_samples;
  Eigen::MatrixXd z(n, d);
  Eigen::VectorXd y(n);
  Eigen::VectorXd w(n);
  Rng rng(cfg.seed);
  const auto n_background = static_cast<std::uint64_t>(background.row_count());
  Eigen::RowVectorXd sample(d);
  const double width2 = ex.kernel_width * ex.kernel_width;
  for (Eigen::Index s = 0; s < n; ++s) {
    if (s == 0) {
      // The instance itself anchors the surrogate.
      sample = instance;
      z.row(s).setOnes();
    } else {
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto r = static_cast<Eigen::Index>(rng.uniform_index(n_background));
        sample[j] = background.values(r, j);
        z(s, j) = binning.bin(j, sample[j]) == instance_bins[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      }
    }
    y[s] = predict_proba(m, sample);
    const double distance = static_cast<double>(d) - z.row(s).sum();
    w[s] = std::exp(-distance * distance / width2);
  }

  // Weighted ridge with an unpenalized intercept, solved on centered data.
  const double w_sum = w.sum();
  const Eigen::RowVectorXd z_mean = (w.transpose() * z) / w_sum;
  const double y_mean = w.dot(y) / w_sum;
  const Eigen::MatrixXd zc = z.rowwise() - z_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  Eigen::MatrixXd gram = zc.transpose() * w.asDiagonal() * zc;
  gram.diagonal().array() += cfg.ridge_lambda;
  const Eigen::VectorXd rhs = zc.transpose() * w.asDiagonal() * yc;
  ex.coefficients = gram.ldlt().solve(rhs);
  if (!ex.coefficients.allFinite()) {
    // Singular system (all-constant bits and no ridge): nothing is explained.
    ex.coefficients.setZero();
  }
  ex.intercept = y_mean - z_mean.dot(ex.coefficients);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(ex.coefficients[a]) > std::abs(ex.coefficients[b]);
  });
  for (const auto j : order) {
    if (static_cast<int>(ex.feature_weights.size()) >= cfg.top_k) break;
    if (std::abs(ex.coefficients[j]) <= kNegligibleWeight) break;
    ex.feature_weights.emplace_back(m.feature_names[static_cast<std::size_t>(j)],
                                    ex.coefficients[j]);
  }
  return ex;
}

ImportanceVector lime_global(const EnsembleModel& m, const Dataset& data,
                             const LimeConfig& cfg) {
  cfg.validate();
  if (data.row_count() == 0) throw ValidationError("LIME aggregation needs rows");
  const Dataset d = align(m, data);

  ImportanceVector iv;
  iv.method = XaiMethod::kLime;
  iv.features = m.feature_names;
  iv.scores = Eigen::VectorXd::Zero(d.column_count());
  for (Eigen::Index i = 0; i < d.row_count(); ++i) {
    LimeConfig local = cfg;
    local.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(i)});
    const auto ex = lime_local(m, d, d.values.row(i), local, i);
    for (const auto& [feature, weight] : ex.feature_weights) {
      const auto it = std::find(iv.features.begin(), iv.features.end(), feature);
      iv.scores[it - iv.features.begin()] += 1.0;
    }
  }
  iv.scores /= static_cast<double>(d.row_count());
  return iv;
}

}  // namespace treeconcord
