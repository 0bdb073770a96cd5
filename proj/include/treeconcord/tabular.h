#ifndef TREECONCORD_TABULAR_H_
#define TREECONCORD_TABULAR_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string_view>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace treeconcord {

// Encoded value of an empty cell. Trees route it to the left child.
inline constexpr double kMissing = -1.0;

inline bool is_missing(double value) { return value == kMissing; }

enum class ColumnKind { kNumeric, kOrdinal };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  // Ordered category labels; ordinal columns only. A cell is encoded as the
  // index of its label in this list.
  std::vector<std::string> categories;

  static ColumnSpec numeric(std::string name);
  static ColumnSpec ordinal(std::string name, std::vector<std::string> categories);

  // Throws ValidationError when the invariants do not hold.
  void validate() const;

  bool operator==(const ColumnSpec&) const = default;
};

// Column layout of a CSV source plus the binary target definition.
struct Schema {
  std::vector<ColumnSpec> columns;
  std::string target_column;
  // Cell labels for class 0 and class 1.
  std::array<std::string, 2> target_labels{"0", "1"};

  void validate() const;
};

Schema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const Schema& schema);
Schema load_schema(const std::filesystem::path& path);

// Immutable case matrix: one row per case, one column per ColumnSpec.
struct Dataset {
  std::vector<ColumnSpec> columns;
  Eigen::MatrixXd values;  // rows x columns, encoded.
  Eigen::VectorXi target;  // {0, 1} per row.

  Eigen::Index row_count() const { return values.rows(); }
  Eigen::Index column_count() const { return values.cols(); }

  // Index of the named column, or nullopt.
  std::optional<Eigen::Index> find_column(const std::string& name) const;
  std::vector<std::string> column_names() const;

  // Label of an encoded ordinal cell, or the number as text for numeric
  // columns. Missing cells decode to "".
  std::string decode(Eigen::Index row, Eigen::Index column) const;

  // Number of rows of class 0 and class 1.
  std::array<Eigen::Index, 2> class_counts() const;

  // Throws ValidationError when rows and columns disagree or an encoded
  // ordinal falls outside its category list.
  void validate() const;
};

struct FeatureSet {
  std::string name;
  std::vector<std::string> features;

  void validate() const;
};

// One column name per line; '#' starts a comment. The set is named after
// the file stem.
FeatureSet load_feature_set(const std::filesystem::path& path);

struct LoadSummary {
  std::int64_t rows_read = 0;
  std::int64_t rows_kept = 0;
  std::map<std::string, std::int64_t> missing_cells_per_column;

  nlohmann::ordered_json to_json() const;
};

// Reads a CSV with a header row. Columns not named in the schema are ignored.
// Rows with an empty target cell are dropped and counted in the summary.
Dataset load_csv(const std::filesystem::path& path, const Schema& schema,
                 LoadSummary* summary = nullptr);
Dataset parse_csv(std::string_view text, const Schema& schema,
                  LoadSummary* summary = nullptr);

// Writes the dataset back with decoded category labels.
void write_csv(const Dataset& d, const Schema& schema,
               const std::filesystem::path& path);

Dataset select_features(const Dataset& d, const FeatureSet& fs);
Dataset select_features(const Dataset& d, const std::vector<std::string>& names);

Dataset take_rows(const Dataset& d, const std::vector<Eigen::Index>& rows);

struct SplitPair {
  Dataset train;
  Dataset test;
  std::vector<Eigen::Index> train_rows;  // Source row indices, ascending.
  std::vector<Eigen::Index> test_rows;
  std::uint64_t seed = 0;
  double test_fraction = 0.3;
};

// Single holdout split. With `stratify`, each class contributes
// round(test_fraction * class_size) rows to the test side.
SplitPair split(const Dataset& d, double test_fraction, std::uint64_t seed,
                bool stratify = true);

// Test-data generator.
struct GeneratedColumn {
  ColumnSpec spec;
  // Numeric columns draw uniformly from [low, high].
  double low = 0.0;
  double high = 1.0;
};

// y = combine(value(column_k) >= threshold_k for each term).
struct DecisionRule {
  enum class Combine { kAll, kAny, kParity };
  struct Term {
    std::string column;
    double threshold = 0.5;
  };
  Combine combine = Combine::kAll;
  std::vector<Term> terms;
};

struct GeneratorSpec {
  std::int64_t n_rows = 100;
  std::vector<GeneratedColumn> columns;
  DecisionRule rule;
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  // kGrid enumerates ordinal columns in mixed-radix order (row i gets the
  // digits of i), which reproduces full truth tables. Numeric columns are
  // still drawn at random.
  enum class Layout { kRandom, kGrid } layout = Layout::kRandom;
};

// Labels are assigned by the rule and then flipped with probability
// noise_rate. Features and flips use separate random streams, so changing the
// noise rate leaves the feature matrix unchanged.
Dataset synthesize(const GeneratorSpec& spec);

// Evaluates the rule on an encoded row of `d`.
int apply_rule(const DecisionRule& rule, const Dataset& d, Eigen::Index row);

}  // namespace treeconcord

#endif  // TREECONCORD_TABULAR_H_
