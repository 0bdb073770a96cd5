#ifndef TREECONCORD_CONCORDANCE_H_
#define TREECONCORD_CONCORDANCE_H_

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "treeconcord/error.h"
#include "treeconcord/xai.h"

namespace treeconcord {

// Ordinal relevance band. 1 is the most relevant.
enum class Band { kUnranked = 0, kFirst = 1, kSecond = 2, kThird = 3 };

// "" for unranked, otherwise the digit.
std::string to_string(Band band);
// Accepts "", "1", "2", "3". Anything else throws ValidationError.
Band band_from_string(const std::string& text);

struct RankAssignment {
  std::string label;
  std::vector<std::string> features;  // The feature universe, in order.
  std::vector<Band> ranks;            // Aligned with `features`.

  Band rank(const std::string& feature) const;
  bool any_ranked() const;
};

// Score-to-band policy. Scores are divided by their maximum first.
//  threshold: s >= t1 -> 1, t2 <= s < t1 -> 2, floor <= s < t2 -> 3,
//             s < floor -> unranked.
//  quantile:  among scores >= floor, q = share of those scores strictly
//             greater than s; q < 1/3 -> 1, q < 2/3 -> 2, else 3.
struct DiscretizePolicy {
  enum class Kind { kThreshold, kQuantile };
  Kind kind = Kind::kThreshold;
  double t1 = 2.0 / 3.0;
  double t2 = 1.0 / 3.0;
  double floor = 0.05;

  void validate() const;
  // Single-line description, e.g. "policy=threshold t1=... t2=... floor=...".
  std::string describe() const;
  bool operator==(const DiscretizePolicy&) const = default;
};

// Label used for an importance vector's ranks, e.g. "MDI-DT".
std::string default_rank_label(const ImportanceVector& iv);

// Replaces negative scores with 0.
ImportanceVector floor_negatives(ImportanceVector iv);

// Scores must be finite and >= 0. An all-zero vector is entirely unranked.
RankAssignment discretize(const ImportanceVector& iv,
                          const DiscretizePolicy& policy = {},
                          std::string label = {});

struct WeightMap {
  double first = 3.0;
  double second = 2.0;
  double third = 1.0;
  double unranked = 0.0;

  // Non-negative and strictly decreasing from first to unranked.
  void validate() const;
  double weight(Band band) const;
  // "1=3,2=2,3=1,unranked=0"; every band must be present.
  static WeightMap parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const WeightMap&) const = default;
};

struct WeightVector {
  std::string label;
  std::vector<std::string> features;
  Eigen::VectorXd weights;
};

WeightVector ranks_to_weights(const RankAssignment& ra, const WeightMap& map = {});

// Plain set Jaccard |a & b| / |a | b|; two empty sets give 1.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

// sum_i min(x_i, y_i) / sum_i max(x_i, y_i) over non-negative weights. Two
// all-zero vectors give 1.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar weighted_jaccard(const Eigen::DenseBase<DerivedX>& x,
                                           const Eigen::DenseBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  static_assert(std::is_same_v<Scalar, typename DerivedY::Scalar>,
                "weighted_jaccard needs a common scalar type");
  if (x.size() != y.size()) {
    throw ValidationError("weighted Jaccard of vectors with different lengths");
  }
  const auto xa = x.derived().array();
  const auto ya = y.derived().array();
  if ((xa < Scalar(0)).any() || (ya < Scalar(0)).any()) {
    throw ValidationError("weighted Jaccard needs non-negative weights");
  }
  const Scalar denominator = xa.max(ya).sum();
  if (denominator == Scalar(0)) return Scalar(1);
  return xa.min(ya).sum() / denominator;
}

// Aligns both vectors by feature name. Throws when the universes differ.
double weighted_jaccard(const WeightVector& x, const WeightVector& y);

struct SimilarityMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd values;

  double at(const std::string& row, const std::string& col) const;
};

SimilarityMatrix similarity_matrix(const std::vector<WeightVector>& vectors);

// Matrix CSV: header row and first column carry labels; cells at two decimals.
void write_similarity_csv(const SimilarityMatrix& sm, const std::filesystem::path& path);
nlohmann::ordered_json to_json(const SimilarityMatrix& sm);
void write_similarity_json(const SimilarityMatrix& sm, const std::filesystem::path& path);

// Rank CSV: header `feature,rank`, rank blank or 1/2/3. Lines starting with
// '#' are comments. `audit` lines are written as such comments.
void write_rank_csv(const RankAssignment& ra, const std::filesystem::path& path,
                    const std::vector<std::string>& audit = {});

// The file's features form the universe; the label is the file stem.
RankAssignment load_rank_csv(const std::filesystem::path& path);

// Abbreviation -> full feature name, read from a CSV with header
// `abbreviation,feature`.
using AbbreviationMap = std::map<std::string, std::string>;
AbbreviationMap load_abbreviations(const std::filesystem::path& path);

// Reads a rank CSV against a fixed universe. Names may be abbreviations.
// Universe features absent from the file are unranked; names outside the
// universe are errors. The label is the file stem.
RankAssignment load_reference_ranking(const std::filesystem::path& path,
                                      const FeatureSet& universe,
                                      const AbbreviationMap& abbreviations = {});

}  // namespace treeconcord

#endif  // TREECONCORD_CONCORDANCE_H_
