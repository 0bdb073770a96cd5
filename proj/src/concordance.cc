#include "treeconcord/concordance.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "treeconcord/csv.h"

namespace treeconcord {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed for " + path.string());
}

struct RankRow {
  std::string feature;
  Band band;
};

std::vector<RankRow> read_rank_rows(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("rank file not found: " + path.string());
  }
  const auto table = csv::read_file(path, /*skip_comments=*/true);
  std::vector<RankRow> rows;
  if (table.header.empty()) return rows;
  if (table.header.size() < 2 || trim(table.header[0]) != "feature" ||
      trim(table.header[1]) != "rank") {
    throw ValidationError(path.string() + ": expected header 'feature,rank'");
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& rec = table.rows[i];
    const std::string where =
        path.string() + " line " + std::to_string(table.line_numbers[i]);
    if (rec.empty() || trim(rec[0]).empty()) {
      throw ValidationError(where + ": empty feature name");
    }
    const std::string rank_text = rec.size() > 1 ? trim(rec[1]) : std::string{};
    Band band;
    try {
      band = band_from_string(rank_text);
    } catch (const ValidationError&) {
      throw ValidationError(where + ": rank '" + rank_text + "' for feature '" +
                            trim(rec[0]) + "' is not 1, 2, 3 or blank");
    }
    rows.push_back({trim(rec[0]), band});
  }
  return rows;
}

}  // namespace

std::string to_string(Band band) {
  return band == Band::kUnranked ? std::string{}
                                 : std::to_string(static_cast<int>(band));
}

Band band_from_string(const std::string& text) {
  const auto t = trim(text);
  if (t.empty()) return Band::kUnranked;
  if (t == "1") return Band::kFirst;
  if (t == "2") return Band::kSecond;
  if (t == "3") return Band::kThird;
  throw ValidationError("invalid rank '" + t + "'");
}

Band RankAssignment::rank(const std::string& feature) const {
  const auto it = std::find(features.begin(), features.end(), feature);
  if (it == features.end()) throw ValidationError("unknown feature '" + feature + "'");
  return ranks[static_cast<std::size_t>(it - features.begin())];
}

bool RankAssignment::any_ranked() const {
  return std::any_of(ranks.begin(), ranks.end(),
                     [](Band b) { return b != Band::kUnranked; });
}

void DiscretizePolicy::validate() const {
  if (!std::isfinite(t1) || !std::isfinite(t2) || !std::isfinite(floor)) {
    throw ValidationError("discretization thresholds must be finite");
  }
  if (!(floor >= 0.0 && floor <= 1.0)) {
    throw ValidationError("discretization floor must lie in [0, 1]");
  }
  if (kind == Kind::kThreshold && !(t1 <= 1.0 && t2 < t1 && floor <= t2)) {
    throw ValidationError("discretization thresholds need floor <= t2 < t1 <= 1");
  }
}

std::string DiscretizePolicy::describe() const {
  if (kind == Kind::kQuantile) return "policy=quantile floor=" + format_double(floor);
  return "policy=threshold t1=" + format_double(t1) + " t2=" + format_double(t2) +
         " floor=" + format_double(floor);
}

std::string default_rank_label(const ImportanceVector& iv) {
  std::string model = upper(iv.model_id);
  if (model == "GBT") model = "XGB";
  return upper(to_string(iv.method)) + (model.empty() ? "" : "-" + model);
}

ImportanceVector floor_negatives(ImportanceVector iv) {
  iv.scores = iv.scores.cwiseMax(0.0);
  return iv;
}

RankAssignment discretize(const ImportanceVector& iv, const DiscretizePolicy& policy,
                          std::string label) {
  policy.validate();
  if (static_cast<std::size_t>(iv.scores.size()) != iv.features.size()) {
    throw ValidationError("importance scores and feature names differ in length");
  }
  for (Eigen::Index i = 0; i < iv.scores.size(); ++i) {
    const double s = iv.scores[i];
    if (!std::isfinite(s)) {
      throw ValidationError("non-finite importance score for '" +
                            iv.features[static_cast<std::size_t>(i)] + "'");
    }
    if (s < 0.0) {
      throw ValidationError("negative importance score for '" +
                            iv.features[static_cast<std::size_t>(i)] +
                            "'; floor negatives first");
    }
  }

  RankAssignment ra;
  ra.label = label.empty() ? default_rank_label(iv) : std::move(label);
  ra.features = iv.features;
  ra.ranks.assign(iv.features.size(), Band::kUnranked);
  const double top = iv.scores.size() ? iv.scores.maxCoeff() : 0.0;
  if (top <= 0.0) return ra;

  const Eigen::VectorXd s = iv.scores / top;
  if (policy.kind == DiscretizePolicy::Kind::kThreshold) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      Band b = Band::kUnranked;
      if (s[i] >= policy.t1) {
        b = Band::kFirst;
      } else if (s[i] >= policy.t2) {
        b = Band::kSecond;
      } else if (s[i] >= policy.floor) {
        b = Band::kThird;
      }
      ra.ranks[static_cast<std::size_t>(i)] = b;
    }
    return ra;
  }

  std::vector<double> kept;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] >= policy.floor && s[i] > 0.0) kept.push_back(s[i]);
  }
  std::sort(kept.begin(), kept.end());
  const double n = static_cast<double>(kept.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (!(s[i] >= policy.floor && s[i] > 0.0)) continue;
    const auto greater = kept.end() - std::upper_bound(kept.begin(), kept.end(), s[i]);
    const double q = static_cast<double>(greater) / n;
    ra.ranks[static_cast<std::size_t>(i)] =
        3.0 * q < 1.0 ? Band::kFirst : (3.0 * q < 2.0 ? Band::kSecond : Band::kThird);
  }
  return ra;
}

void WeightMap::validate() const {
  const double w[] = {first, second, third, unranked};
  for (const double v : w) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("weight map entries must be finite and non-negative");
    }
  }
  if (!(first > second && second > third && third > unranked)) {
    throw ValidationError("weight map must be strictly decreasing in rank");
  }
}

double WeightMap::weight(Band band) const {
  switch (band) {
    case Band::kFirst: return first;
    case Band::kSecond: return second;
    case Band::kThird: return third;
    case Band::kUnranked: return unranked;
  }
  throw ValidationError("rank missing from weight map");
}

WeightMap WeightMap::parse(const std::string& text) {
  WeightMap map;
  bool seen[4] = {false, false, false, false};
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("weight map entry '" + item + "' is not key=value");
    }
    const auto key = trim(item.substr(0, eq));
    const auto value_text = trim(item.substr(eq + 1));
    char* end = nullptr;
    const double value = std::strtod(value_text.c_str(), &end);
    if (value_text.empty() || *end != '\0') {
      throw ValidationError("weight map value '" + value_text + "' is not a number");
    }
    int slot;
    if (key == "1") {
      slot = 0;
      map.first = value;
    } else if (key == "2") {
      slot = 1;
      map.second = value;
    } else if (key == "3") {
      slot = 2;
      map.third = value;
    } else if (key == "unranked" || key.empty()) {
      slot = 3;
      map.unranked = value;
    } else {
      throw ValidationError("weight map key '" + key + "' is not 1, 2, 3 or unranked");
    }
    if (seen[slot]) throw ValidationError("weight map key '" + key + "' repeated");
    seen[slot] = true;
  }
  static const char* const names[] = {"1", "2", "3", "unranked"};
  for (int i = 0; i < 4; ++i) {
    if (!seen[i]) {
      throw ValidationError(std::string("rank ") + names[i] + " missing from weight map");
    }
  }
  map.validate();
  return map;
}

std::string WeightMap::to_string() const {
  return "1=" + format_double(first) + ",2=" + format_double(second) +
         ",3=" + format_double(third) + ",unranked=" + format_double(unranked);
}

WeightVector ranks_to_weights(const RankAssignment& ra, const WeightMap& map) {
  map.validate();
  if (ra.ranks.size() != ra.features.size()) {
    throw ValidationError("rank assignment '" + ra.label + "' is malformed");
  }
  WeightVector wv{ra.label, ra.features,
                  Eigen::VectorXd(static_cast<Eigen::Index>(ra.features.size()))};
  for (std::size_t i = 0; i < ra.ranks.size(); ++i) {
    wv.weights[static_cast<Eigen::Index>(i)] = map.weight(ra.ranks[i]);
  }
  return wv;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& x : a) common += b.count(x);
  return static_cast<double>(common) /
         static_cast<double>(a.size() + b.size() - common);
}

double weighted_jaccard(const WeightVector& x, const WeightVector& y) {
  if (x.features == y.features) return weighted_jaccard(x.weights, y.weights);
  const std::set<std::string> fx(x.features.begin(), x.features.end());
  const std::set<std::string> fy(y.features.begin(), y.features.end());
  if (fx != fy || fx.size() != x.features.size() || fy.size() != y.features.size()) {
    throw ValidationError("feature universes of '" + x.label + "' and '" + y.label +
                          "' differ");
  }
  Eigen::VectorXd aligned(y.weights.size());
  for (std::size_t i = 0; i < x.features.size(); ++i) {
    const auto it = std::find(y.features.begin(), y.features.end(), x.features[i]);
    aligned[static_cast<Eigen::Index>(i)] =
        y.weights[static_cast<Eigen::Index>(it - y.features.begin())];
  }
  return weighted_jaccard(x.weights, aligned);
}

double SimilarityMatrix::at(const std::string& row, const std::string& col) const {
  const auto r = std::find(labels.begin(), labels.end(), row);
  const auto c = std::find(labels.begin(), labels.end(), col);
  if (r == labels.end() || c == labels.end()) {
    throw ValidationError("label not in similarity matrix: " +
                          (r == labels.end() ? row : col));
  }
  return values(r - labels.begin(), c - labels.begin());
}

SimilarityMatrix similarity_matrix(const std::vector<WeightVector>& vectors) {
  if (vectors.size() < 2) {
    throw ValidationError("a similarity matrix needs at least two vectors");
  }
  SimilarityMatrix sm;
  const auto n = static_cast<Eigen::Index>(vectors.size());
  for (const auto& v : vectors) {
    if (std::find(sm.labels.begin(), sm.labels.end(), v.label) != sm.labels.end()) {
      throw ValidationError("duplicate label '" + v.label + "'");
    }
    sm.labels.push_back(v.label);
  }
  sm.values = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = weighted_jaccard(vectors[static_cast<std::size_t>(i)],
                                        vectors[static_cast<std::size_t>(j)]);
      sm.values(i, j) = v;
      sm.values(j, i) = v;
    }
  }
  return sm;
}

void write_similarity_csv(const SimilarityMatrix& sm, const std::filesystem::path& path) {
  std::string out;
  csv::Record header{""};
  header.insert(header.end(), sm.labels.begin(), sm.labels.end());
  out += csv::join(header) + "\n";
  for (std::size_t i = 0; i < sm.labels.size(); ++i) {
    csv::Record rec{sm.labels[i]};
    for (std::size_t j = 0; j < sm.labels.size(); ++j) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.2f",
                    sm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      rec.emplace_back(buf);
    }
    out += csv::join(rec) + "\n";
  }
  write_text(path, out);
}

nlohmann::ordered_json to_json(const SimilarityMatrix& sm) {
  nlohmann::ordered_json doc;
  doc["measure"] = "weighted_jaccard";
  doc["labels"] = sm.labels;
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < sm.values.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < sm.values.cols(); ++j) row.push_back(sm.values(i, j));
    rows.push_back(std::move(row));
  }
  doc["values"] = std::move(rows);
  return doc;
}

void write_similarity_json(const SimilarityMatrix& sm, const std::filesystem::path& path) {
  write_text(path, to_json(sm).dump(2) + "\n");
}

void write_rank_csv(const RankAssignment& ra, const std::filesystem::path& path,
                    const std::vector<std::string>& audit) {
  std::string out;
  for (const auto& line : audit) out += "# " + line + "\n";
  out += "feature,rank\n";
  for (std::size_t i = 0; i < ra.features.size(); ++i) {
    out += csv::join({ra.features[i], to_string(ra.ranks[i])}) + "\n";
  }
  write_text(path, out);
}

RankAssignment load_rank_csv(const std::filesystem::path& path) {
  RankAssignment ra;
  ra.label = path.stem().string();
  for (auto& row : read_rank_rows(path)) {
    if (std::find(ra.features.begin(), ra.features.end(), row.feature) !=
        ra.features.end()) {
      throw ValidationError(path.string() + ": feature '" + row.feature + "' repeated");
    }
    ra.features.push_back(std::move(row.feature));
    ra.ranks.push_back(row.band);
  }
  return ra;
}

AbbreviationMap load_abbreviations(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError("abbreviation file not found: " + path.string());
  }
  const auto table = csv::read_file(path, /*skip_comments=*/true);
  if (table.header.size() < 2 || trim(table.header[0]) != "abbreviation" ||
      trim(table.header[1]) != "feature") {
    throw ValidationError(path.string() + ": expected header 'abbreviation,feature'");
  }
  AbbreviationMap map;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& rec = table.rows[i];
    if (rec.size() < 2 || trim(rec[0]).empty() || trim(rec[1]).empty()) {
      throw ValidationError(path.string() + " line " +
                            std::to_string(table.line_numbers[i]) +
                            ": expected abbreviation,feature");
    }
    map[trim(rec[0])] = trim(rec[1]);
  }
  return map;
}

RankAssignment load_reference_ranking(const std::filesystem::path& path,
                                      const FeatureSet& universe,
                                      const AbbreviationMap& abbreviations) {
  RankAssignment ra;
  ra.label = path.stem().string();
  ra.features = universe.features;
  ra.ranks.assign(universe.features.size(), Band::kUnranked);
  std::vector<bool> seen(universe.features.size(), false);
  for (const auto& row : read_rank_rows(path)) {
    auto it = std::find(ra.features.begin(), ra.features.end(), row.feature);
    if (it == ra.features.end()) {
      const auto abbr = abbreviations.find(row.feature);
      if (abbr != abbreviations.end()) {
        it = std::find(ra.features.begin(), ra.features.end(), abbr->second);
      }
    }
    if (it == ra.features.end()) {
      throw ValidationError(path.string() + ": unknown feature '" + row.feature +
                            "' (not in feature set '" + universe.name + "')");
    }
    const auto idx = static_cast<std::size_t>(it - ra.features.begin());
    if (seen[idx]) {
      throw ValidationError(path.string() + ": feature '" + *it + "' listed twice");
    }
    seen[idx] = true;
    ra.ranks[idx] = row.band;
  }
  return ra;
}

}  // namespace treeconcord
