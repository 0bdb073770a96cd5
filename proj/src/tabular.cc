#include "treeconcord/tabular.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "treeconcord/csv.h"
#include "treeconcord/error.h"
#include "treeconcord/random.h"

namespace treeconcord {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  char* end = nullptr;
  const double value = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::string format_number(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

}  // namespace

ColumnSpec ColumnSpec::numeric(std::string name) {
  return ColumnSpec{std::move(name), ColumnKind::kNumeric, {}};
}

ColumnSpec ColumnSpec::ordinal(std::string name,
                               std::vector<std::string> categories) {
  return ColumnSpec{std::move(name), ColumnKind::kOrdinal, std::move(categories)};
}

void ColumnSpec::validate() const {
  if (name.empty()) throw ValidationError("column with empty name");
  if (kind == ColumnKind::kNumeric) {
    if (!categories.empty()) {
      throw ValidationError("numeric column '" + name +
                            "' must not declare categories");
    }
    return;
  }
  if (categories.size() < 2) {
    throw ValidationError("ordinal column '" + name +
                          "' needs at least 2 categories");
  }
  std::set<std::string> seen;
  for (const auto& c : categories) {
    if (!seen.insert(c).second) {
      throw ValidationError("ordinal column '" + name +
                            "' repeats category '" + c + "'");
    }
  }
}

void Schema::validate() const {
  if (columns.empty()) throw ValidationError("schema declares no columns");
  if (target_column.empty()) throw ValidationError("schema has no target column");
  std::set<std::string> names;
  for (const auto& c : columns) {
    c.validate();
    if (!names.insert(c.name).second) {
      throw ValidationError("schema repeats column '" + c.name + "'");
    }
  }
  if (names.contains(target_column)) {
    throw ValidationError("target column '" + target_column +
                          "' is also declared as a feature");
  }
  if (target_labels[0] == target_labels[1]) {
    throw ValidationError("target labels must differ");
  }
}

Schema schema_from_json(const nlohmann::json& doc) {
  Schema schema;
  try {
    schema.target_column = doc.at("target").get<std::string>();
    if (doc.contains("target_labels")) {
      const auto labels = doc.at("target_labels").get<std::vector<std::string>>();
      if (labels.size() != 2) {
        throw ValidationError("target_labels must list exactly two labels");
      }
      schema.target_labels = {labels[0], labels[1]};
    }
    for (const auto& col : doc.at("columns")) {
      const auto kind = col.at("kind").get<std::string>();
      ColumnSpec spec;
      spec.name = col.at("name").get<std::string>();
      if (kind == "numeric") {
        spec.kind = ColumnKind::kNumeric;
        if (col.contains("categories")) {
          throw ValidationError("numeric column '" + spec.name +
                                "' must not declare categories");
        }
      } else if (kind == "ordinal") {
        spec.kind = ColumnKind::kOrdinal;
        spec.categories = col.at("categories").get<std::vector<std::string>>();
      } else {
        throw ValidationError("column '" + spec.name + "': unknown kind '" +
                              kind + "'");
      }
      schema.columns.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed schema: ") + e.what());
  }
  schema.validate();
  return schema;
}

nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json doc;
  doc["target"] = schema.target_column;
  doc["target_labels"] = {schema.target_labels[0], schema.target_labels[1]};
  auto& cols = doc["columns"] = nlohmann::json::array();
  for (const auto& c : schema.columns) {
    nlohmann::json col{{"name", c.name}};
    if (c.kind == ColumnKind::kNumeric) {
      col["kind"] = "numeric";
    } else {
      col["kind"] = "ordinal";
      col["categories"] = c.categories;
    }
    cols.push_back(std::move(col));
  }
  return doc;
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open schema: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema " + path.string() + ": " + e.what());
  }
  return schema_from_json(doc);
}

std::optional<Eigen::Index> Dataset::find_column(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].name == name) return static_cast<Eigen::Index>(j);
  }
  return std::nullopt;
}

std::vector<std::string> Dataset::column_names() const {
  std::vector<std::string> names;
  names.reserve(columns.size());
  for (const auto& c : columns) names.push_back(c.name);
  return names;
}

std::string Dataset::decode(Eigen::Index row, Eigen::Index column) const {
  const double v = values(row, column);
  if (is_missing(v)) return {};
  const auto& spec = columns[static_cast<std::size_t>(column)];
  if (spec.kind == ColumnKind::kOrdinal) {
    return spec.categories.at(static_cast<std::size_t>(v));
  }
  return format_number(v);
}

std::array<Eigen::Index, 2> Dataset::class_counts() const {
  const Eigen::Index positives = target.sum();
  return {target.size() - positives, positives};
}

void Dataset::validate() const {
  if (static_cast<Eigen::Index>(columns.size()) != values.cols()) {
    throw ValidationError("dataset column specs do not match the value matrix");
  }
  if (target.size() != values.rows()) {
    throw ValidationError("dataset target length differs from row count");
  }
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    if (target[i] != 0 && target[i] != 1) {
      throw ValidationError("dataset target must be 0 or 1");
    }
  }
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const auto& spec = columns[static_cast<std::size_t>(j)];
    if (spec.kind != ColumnKind::kOrdinal) continue;
    const double top = static_cast<double>(spec.categories.size()) - 1.0;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      const double v = values(i, j);
      if (is_missing(v)) continue;
      if (v < 0.0 || v > top || v != std::floor(v)) {
        throw ValidationError("column '" + spec.name +
                              "' holds an invalid category index");
      }
    }
  }
}

void FeatureSet::validate() const {
  if (features.empty()) {
    throw ValidationError("feature set '" + name + "' is empty");
  }
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (!seen.insert(f).second) {
      throw ValidationError("feature set '" + name + "' repeats '" + f + "'");
    }
  }
}

FeatureSet load_feature_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open feature set: " + path.string());
  FeatureSet fs;
  fs.name = path.stem().string();
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    auto name = trim(line);
    if (!name.empty()) fs.features.push_back(std::move(name));
  }
  fs.validate();
  return fs;
}

nlohmann::ordered_json LoadSummary::to_json() const {
  nlohmann::ordered_json doc;
  doc["rows_read"] = rows_read;
  doc["rows_kept"] = rows_kept;
  doc["missing_cells_per_column"] = nlohmann::ordered_json::object();
  for (const auto& [name, count] : missing_cells_per_column) {
    doc["missing_cells_per_column"][name] = count;
  }
  return doc;
}

Dataset parse_csv(std::string_view text, const Schema& schema,
                  LoadSummary* summary) {
  schema.validate();
  const csv::Table table = csv::parse(text);

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) {
      return std::string::npos;
    }
    return static_cast<std::size_t>(it - table.header.begin());
  };

  const std::size_t target_pos = column_of(schema.target_column);
  if (target_pos == std::string::npos) {
    throw ValidationError("missing target column '" + schema.target_column + "'");
  }
  std::vector<std::size_t> positions;
  for (const auto& spec : schema.columns) {
    const std::size_t pos = column_of(spec.name);
    if (pos == std::string::npos) {
      throw ValidationError("CSV header lacks schema column '" + spec.name + "'");
    }
    positions.push_back(pos);
  }

  LoadSummary local;
  for (const auto& spec : schema.columns) local.missing_cells_per_column[spec.name] = 0;

  std::vector<std::vector<double>> kept_rows;
  std::vector<int> kept_target;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& record = table.rows[r];
    const std::string where = "row " + std::to_string(r + 1) + " (line " +
                              std::to_string(table.line_numbers[r]) + ")";
    if (record.size() != table.header.size()) {
      throw ValidationError(where + ": expected " +
                            std::to_string(table.header.size()) +
                            " fields, found " + std::to_string(record.size()));
    }
    ++local.rows_read;

    const std::string target_cell = trim(record[target_pos]);
    if (target_cell.empty()) continue;
    int label;
    if (target_cell == schema.target_labels[0]) {
      label = 0;
    } else if (target_cell == schema.target_labels[1]) {
      label = 1;
    } else {
      throw ValidationError(where + ": target value '" + target_cell +
                            "' is neither '" + schema.target_labels[0] +
                            "' nor '" + schema.target_labels[1] + "'");
    }

    std::vector<double> encoded(schema.columns.size());
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
      const auto& spec = schema.columns[j];
      const std::string cell = trim(record[positions[j]]);
      if (cell.empty()) {
        encoded[j] = kMissing;
        ++local.missing_cells_per_column[spec.name];
        continue;
      }
      if (spec.kind == ColumnKind::kOrdinal) {
        const auto it = std::find(spec.categories.begin(), spec.categories.end(), cell);
        if (it == spec.categories.end()) {
          throw ValidationError(where + ": unknown category '" + cell +
                                "' in column '" + spec.name + "'");
        }
        encoded[j] = static_cast<double>(it - spec.categories.begin());
      } else {
        const auto value = parse_number(cell);
        if (!value) {
          throw ValidationError(where + ": non-numeric value '" + cell +
                                "' in numeric column '" + spec.name + "'");
        }
        encoded[j] = *value;
      }
    }
    kept_rows.push_back(std::move(encoded));
    kept_target.push_back(label);
  }
  local.rows_kept = static_cast<std::int64_t>(kept_rows.size());

  Dataset d;
  d.columns = schema.columns;
  d.values.resize(static_cast<Eigen::Index>(kept_rows.size()),
                  static_cast<Eigen::Index>(schema.columns.size()));
  d.target.resize(static_cast<Eigen::Index>(kept_rows.size()));
  for (std::size_t i = 0; i < kept_rows.size(); ++i) {
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
      d.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kept_rows[i][j];
    }
    d.target[static_cast<Eigen::Index>(i)] = kept_target[i];
  }
  if (summary) *summary = std::move(local);
  return d;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema,
                 LoadSummary* summary) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open data file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), schema, summary);
}

void write_csv(const Dataset& d, const Schema& schema,
               const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  csv::Record header = d.column_names();
  header.push_back(schema.target_column);
  out << csv::join(header) << '\n';
  for (Eigen::Index i = 0; i < d.row_count(); ++i) {
    csv::Record record;
    for (Eigen::Index j = 0; j < d.column_count(); ++j) {
      record.push_back(d.decode(i, j));
    }
    record.push_back(schema.target_labels[static_cast<std::size_t>(d.target[i])]);
    out << csv::join(record) << '\n';
  }
}

Dataset select_features(const Dataset& d, const std::vector<std::string>& names) {
  Dataset out;
  std::vector<Eigen::Index> indices;
  for (const auto& name : names) {
    const auto j = d.find_column(name);
    if (!j) throw ValidationError("unknown feature '" + name + "'");
    indices.push_back(*j);
    out.columns.push_back(d.columns[static_cast<std::size_t>(*j)]);
  }
  out.values = d.values(Eigen::all, indices);
  out.target = d.target;
  return out;
}

Dataset select_features(const Dataset& d, const FeatureSet& fs) {
  fs.validate();
  return select_features(d, fs.features);
}

Dataset take_rows(const Dataset& d, const std::vector<Eigen::Index>& rows) {
  Dataset out;
  out.columns = d.columns;
  out.values = d.values(rows, Eigen::all);
  out.target = d.target(rows);
  return out;
}

SplitPair split(const Dataset& d, double test_fraction, std::uint64_t seed,
                bool stratify) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test fraction must lie strictly between 0 and 1");
  }
  if (d.row_count() < 4) {
    throw ValidationError("split needs at least 4 rows");
  }

  std::vector<std::vector<Eigen::Index>> groups;
  if (stratify) {
    groups.resize(2);
    for (Eigen::Index i = 0; i < d.row_count(); ++i) {
      groups[static_cast<std::size_t>(d.target[i])].push_back(i);
    }
  } else {
    groups.resize(1);
    for (Eigen::Index i = 0; i < d.row_count(); ++i) groups[0].push_back(i);
  }

  SplitPair pair;
  pair.seed = seed;
  pair.test_fraction = test_fraction;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& group = groups[g];
    Rng rng(derive_seed(seed, {g}));
    rng.shuffle(std::span<Eigen::Index>(group));
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(group.size())));
    pair.test_rows.insert(pair.test_rows.end(), group.begin(),
                          group.begin() + static_cast<std::ptrdiff_t>(n_test));
    pair.train_rows.insert(pair.train_rows.end(),
                           group.begin() + static_cast<std::ptrdiff_t>(n_test),
                           group.end());
  }
  if (pair.test_rows.empty() || pair.train_rows.empty()) {
    throw ValidationError("too few rows to place at least one in each partition");
  }
  std::sort(pair.train_rows.begin(), pair.train_rows.end());
  std::sort(pair.test_rows.begin(), pair.test_rows.end());
  pair.train = take_rows(d, pair.train_rows);
  pair.test = take_rows(d, pair.test_rows);
  return pair;
}

int apply_rule(const DecisionRule& rule, const Dataset& d, Eigen::Index row) {
  int hits = 0;
  for (const auto& term : rule.terms) {
    const auto j = d.find_column(term.column);
    if (!j) throw ValidationError("rule references unknown column '" + term.column + "'");
    if (d.values(row, *j) >= term.threshold) ++hits;
  }
  const int n = static_cast<int>(rule.terms.size());
  switch (rule.combine) {
    case DecisionRule::Combine::kAll:
      return hits == n ? 1 : 0;
    case DecisionRule::Combine::kAny:
      return hits > 0 ? 1 : 0;
    case DecisionRule::Combine::kParity:
      return hits % 2;
  }
  return 0;
}

Dataset synthesize(const GeneratorSpec& spec) {
  if (spec.n_rows < 1) throw ValidationError("generator needs n_rows >= 1");
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate <= 1.0)) {
    throw ValidationError("noise rate must lie in [0, 1]");
  }
  if (spec.rule.terms.empty()) throw ValidationError("decision rule has no terms");

  Dataset d;
  for (const auto& col : spec.columns) {
    col.spec.validate();
    d.columns.push_back(col.spec);
  }
  for (const auto& term : spec.rule.terms) {
    if (!d.find_column(term.column)) {
      throw ValidationError("rule references unknown column '" + term.column + "'");
    }
  }

  const auto n = static_cast<Eigen::Index>(spec.n_rows);
  const auto m = static_cast<Eigen::Index>(spec.columns.size());
  d.values.resize(n, m);
  d.target.resize(n);

  Rng features(derive_seed(spec.seed, {0}));
  Rng flips(derive_seed(spec.seed, {1}));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto digits = static_cast<std::uint64_t>(i);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& col = spec.columns[static_cast<std::size_t>(j)];
      if (col.spec.kind == ColumnKind::kOrdinal) {
        const auto k = col.spec.categories.size();
        std::uint64_t index;
        if (spec.layout == GeneratorSpec::Layout::kGrid) {
          index = digits % k;
          digits /= k;
        } else {
          index = features.uniform_index(k);
        }
        d.values(i, j) = static_cast<double>(index);
      } else {
        d.values(i, j) = col.low + (col.high - col.low) * features.uniform01();
      }
    }
    int label = apply_rule(spec.rule, d, i);
    if (flips.bernoulli(spec.noise_rate)) label = 1 - label;
    d.target[i] = label;
  }
  return d;
}

}  // namespace treeconcord
