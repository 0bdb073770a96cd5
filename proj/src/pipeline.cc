#include "treeconcord/pipeline.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iterator>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "treeconcord/csv.h"
#include "treeconcord/error.h"

namespace treeconcord {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) out += (out.empty() ? "" : ", ") + item;
  return out;
}

std::string number_text(double v) { return json(v).dump(); }

std::string scalar_text(const ordered_json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

double parse_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0') {
    throw ValidationError("config key '" + key + "': '" + text + "' is not a number");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (text.empty() || *end != '\0') {
    throw ValidationError("config key '" + key + "': '" + text + "' is not an integer");
  }
  return v;
}

std::uint64_t parse_seed(const std::string& text) {
  char* end = nullptr;
  if (text.empty() || text[0] == '-') {
    throw ValidationError("seed must be a non-negative integer, got '" + text + "'");
  }
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (*end != '\0') {
    throw ValidationError("seed must be a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ValidationError("config key '" + key + "': '" + text + "' is not a boolean");
}

// Config keys are the params_to_json keys, with `kind` for model_kind. The
// seed is not settable per model.
std::string params_key(const std::string& key) { return key == "kind" ? "model_kind" : key; }

void apply_param(ordered_json& doc, const std::string& key, const std::string& text) {
  const auto k = params_key(key);
  if (k == "seed" || !doc.contains(k)) {
    throw ValidationError("unknown model parameter '" + key + "'");
  }
  json value;
  try {
    value = json::parse(text);
    if (!value.is_primitive() || value.is_null()) value = text;
  } catch (const json::parse_error&) {
    value = text;
  }
  doc[k] = value;
}

ModelParams params_from_entries(
    const std::vector<std::pair<std::string, std::string>>& entries,
    const ModelParams& start) {
  ordered_json doc = params_to_json(start);
  for (const auto& [key, value] : entries) apply_param(doc, key, value);
  return params_from_json(doc);
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("write failed for " + path.string());
}

std::string format2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct RawSection {
  std::string kind;  // "run", "model", "reference"
  std::string name;
  std::size_t line = 0;
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::size_t> entry_lines;
};

std::vector<RawSection> read_sections(const std::string& text) {
  std::vector<RawSection> sections;
  std::stringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = "config line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + ": unterminated section header");
      const auto inner = trim(line.substr(1, line.size() - 2));
      const auto space = inner.find_first_of(" \t");
      RawSection s;
      s.kind = inner.substr(0, space);
      s.name = space == std::string::npos ? "" : trim(inner.substr(space));
      s.line = line_no;
      if (s.kind == "run") {
        if (!s.name.empty()) throw ValidationError(where + ": [run] takes no name");
      } else if (s.kind == "model" || s.kind == "reference") {
        if (s.name.empty()) throw ValidationError(where + ": [" + s.kind + "] needs a name");
      } else {
        throw ValidationError(where + ": unknown section '" + s.kind + "'");
      }
      sections.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
    if (sections.empty()) throw ValidationError(where + ": key outside a section");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    auto& s = sections.back();
    for (const auto& [k, v] : s.entries) {
      if (k == key) throw ValidationError(where + ": key '" + key + "' repeated");
    }
    s.entries.emplace_back(std::move(key), std::move(value));
    s.entry_lines.push_back(line_no);
  }
  return sections;
}

void apply_run_key(PipelineConfig& cfg, const std::string& key, const std::string& v) {
  if (key == "data") {
    cfg.data = v;
  } else if (key == "schema") {
    cfg.schema = v;
  } else if (key == "target") {
    cfg.target = v;
  } else if (key == "feature_sets") {
    cfg.feature_sets = split_list(v);
  } else if (key == "abbreviations") {
    cfg.abbreviations = v;
  } else if (key == "seed") {
    cfg.seed = parse_seed(v);
  } else if (key == "output") {
    cfg.output = v;
  } else if (key == "test_fraction") {
    cfg.test_fraction = parse_double(key, v);
  } else if (key == "stratify") {
    cfg.stratify = parse_bool(key, v);
  } else if (key == "methods") {
    cfg.methods.clear();
    for (const auto& m : split_list(v)) cfg.methods.push_back(xai_method_from_string(m));
  } else if (key == "averaging") {
    cfg.averaging = averaging_from_string(v);
  } else if (key == "discretization") {
    if (v == "threshold") {
      cfg.policy.kind = DiscretizePolicy::Kind::kThreshold;
    } else if (v == "quantile") {
      cfg.policy.kind = DiscretizePolicy::Kind::kQuantile;
    } else {
      throw ValidationError("discretization must be 'threshold' or 'quantile'");
    }
  } else if (key == "t1") {
    cfg.policy.t1 = parse_double(key, v);
  } else if (key == "t2") {
    cfg.policy.t2 = parse_double(key, v);
  } else if (key == "floor") {
    cfg.policy.floor = parse_double(key, v);
  } else if (key == "weights") {
    cfg.weights = WeightMap::parse(v);
  } else if (key == "mda_repeats") {
    cfg.mda_repeats = static_cast<int>(parse_int(key, v));
  } else if (key == "lime_samples") {
    cfg.lime.n_samples = static_cast<int>(parse_int(key, v));
  } else if (key == "lime_top_k") {
    cfg.lime.top_k = static_cast<int>(parse_int(key, v));
  } else if (key == "lime_kernel_width") {
    cfg.lime.kernel_width = parse_double(key, v);
  } else if (key == "lime_ridge") {
    cfg.lime.ridge_lambda = parse_double(key, v);
  } else {
    throw ValidationError("unknown [run] key '" + key + "'");
  }
}

void require_file(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ValidationError(what + " not found: " + path.string());
  }
}

}  // namespace

const ModelParams& ModelSpec::params_for(const std::string& feature_set) const {
  const auto it = per_set.find(feature_set);
  return it == per_set.end() ? params : it->second;
}

std::filesystem::path PipelineConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

bool PipelineConfig::operator==(const PipelineConfig& o) const {
  return data == o.data && schema == o.schema && target == o.target &&
         feature_sets == o.feature_sets && abbreviations == o.abbreviations &&
         seed == o.seed && output == o.output && test_fraction == o.test_fraction &&
         stratify == o.stratify && methods == o.methods && averaging == o.averaging &&
         policy == o.policy && weights == o.weights && mda_repeats == o.mda_repeats &&
         lime == o.lime && models == o.models && references == o.references;
}

void PipelineConfig::validate() const {
  if (!seed) throw ValidationError("seed is required ([run] seed)");
  if (data.empty()) throw ValidationError("[run] data is required");
  if (schema.empty()) throw ValidationError("[run] schema is required");
  require_file(resolve(data), "data file");
  require_file(resolve(schema), "schema file");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test_fraction must lie in (0, 1)");
  }
  if (feature_sets.empty()) throw ValidationError("[run] feature_sets is empty");
  std::set<std::string> set_names;
  std::map<std::string, FeatureSet> sets;
  for (const auto& path : feature_sets) {
    require_file(resolve(path), "feature set file");
    auto fs = load_feature_set(resolve(path));
    if (!set_names.insert(fs.name).second) {
      throw ValidationError("two feature sets are named '" + fs.name + "'");
    }
    sets.emplace(fs.name, std::move(fs));
  }
  AbbreviationMap abbreviations_map;
  if (!abbreviations.empty()) {
    require_file(resolve(abbreviations), "abbreviation file");
    abbreviations_map = load_abbreviations(resolve(abbreviations));
  }
  if (methods.empty()) throw ValidationError("[run] methods is empty");
  if (std::set<XaiMethod>(methods.begin(), methods.end()).size() != methods.size()) {
    throw ValidationError("[run] methods lists a method twice");
  }
  if (mda_repeats < 1) throw ValidationError("mda_repeats must be >= 1");
  lime.validate();
  policy.validate();
  weights.validate();
  if (models.empty()) throw ValidationError("no [model] sections");
  std::set<std::string> model_names;
  for (const auto& m : models) {
    if (!model_names.insert(m.name).second) {
      throw ValidationError("model '" + m.name + "' defined twice");
    }
    m.params.validate();
    for (const auto& [set, p] : m.per_set) {
      if (!set_names.count(set)) {
        throw ValidationError("model '" + m.name + "' overrides unknown feature set '" +
                              set + "'");
      }
      p.validate();
    }
  }
  std::set<std::string> ref_names;
  for (const auto& r : references) {
    if (!ref_names.insert(r.name).second || model_names.count(r.name)) {
      throw ValidationError("reference name '" + r.name + "' is not unique");
    }
    for (const auto& [set, path] : r.paths) {
      if (!set_names.count(set)) {
        throw ValidationError("reference '" + r.name + "' names unknown feature set '" +
                              set + "'");
      }
      require_file(resolve(path), "reference ranking '" + r.name + "'");
      load_reference_ranking(resolve(path), sets.at(set), abbreviations_map);
    }
  }
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  const auto sections = read_sections(text);
  bool have_run = false;

  // The run section is applied first so that per-set keys can be checked
  // against feature-set names regardless of section order.
  for (const auto& s : sections) {
    if (s.kind != "run") continue;
    if (have_run) throw ValidationError("config has more than one [run] section");
    have_run = true;
    for (std::size_t i = 0; i < s.entries.size(); ++i) {
      try {
        apply_run_key(cfg, s.entries[i].first, s.entries[i].second);
      } catch (const ValidationError& e) {
        throw ValidationError("config line " + std::to_string(s.entry_lines[i]) + ": " +
                              e.what());
      }
    }
  }
  if (!have_run) throw ValidationError("config has no [run] section");

  for (const auto& s : sections) {
    const std::string where = "config line " + std::to_string(s.line);
    if (s.kind == "model") {
      std::vector<std::pair<std::string, std::string>> base;
      std::map<std::string, std::vector<std::pair<std::string, std::string>>> per_set;
      for (const auto& [key, value] : s.entries) {
        const auto dot = key.find('.');
        if (dot == std::string::npos) {
          base.emplace_back(key, value);
        } else {
          per_set[key.substr(0, dot)].emplace_back(key.substr(dot + 1), value);
        }
      }
      ModelSpec spec;
      spec.name = s.name;
      try {
        if (std::none_of(base.begin(), base.end(),
                         [](const auto& kv) { return kv.first == "kind"; })) {
          throw ValidationError("model needs a 'kind'");
        }
        spec.params = params_from_entries(base, ModelParams{});
        for (const auto& [set, entries] : per_set) {
          for (const auto& kv : entries) {
            if (params_key(kv.first) == "model_kind") {
              throw ValidationError("the model kind cannot vary by feature set");
            }
          }
          auto p = params_from_entries(entries, spec.params);
          if (!(p == spec.params)) spec.per_set.emplace(set, p);
        }
      } catch (const ValidationError& e) {
        throw ValidationError(where + " [model " + s.name + "]: " + e.what());
      }
      cfg.models.push_back(std::move(spec));
    } else if (s.kind == "reference") {
      ReferenceSpec ref;
      ref.name = s.name;
      for (const auto& [key, value] : s.entries) ref.paths[key] = value;
      cfg.references.push_back(std::move(ref));
    }
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config: " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), {}};
  return parse_config(text, path.parent_path());
}

std::string config_to_text(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "[run]\n";
  out << "data = " << cfg.data << "\n";
  out << "schema = " << cfg.schema << "\n";
  if (!cfg.target.empty()) out << "target = " << cfg.target << "\n";
  out << "feature_sets = " << join_list(cfg.feature_sets) << "\n";
  if (!cfg.abbreviations.empty()) out << "abbreviations = " << cfg.abbreviations << "\n";
  if (cfg.seed) out << "seed = " << *cfg.seed << "\n";
  out << "output = " << cfg.output << "\n";
  out << "test_fraction = " << number_text(cfg.test_fraction) << "\n";
  out << "stratify = " << (cfg.stratify ? "true" : "false") << "\n";
  std::vector<std::string> methods;
  for (const auto m : cfg.methods) methods.push_back(to_string(m));
  out << "methods = " << join_list(methods) << "\n";
  out << "averaging = " << to_string(cfg.averaging) << "\n";
  out << "discretization = "
      << (cfg.policy.kind == DiscretizePolicy::Kind::kThreshold ? "threshold" : "quantile")
      << "\n";
  out << "t1 = " << number_text(cfg.policy.t1) << "\n";
  out << "t2 = " << number_text(cfg.policy.t2) << "\n";
  out << "floor = " << number_text(cfg.policy.floor) << "\n";
  out << "weights = " << cfg.weights.to_string() << "\n";
  out << "mda_repeats = " << cfg.mda_repeats << "\n";
  out << "lime_samples = " << cfg.lime.n_samples << "\n";
  out << "lime_top_k = " << cfg.lime.top_k << "\n";
  out << "lime_kernel_width = " << number_text(cfg.lime.kernel_width) << "\n";
  out << "lime_ridge = " << number_text(cfg.lime.ridge_lambda) << "\n";

  for (const auto& m : cfg.models) {
    out << "\n[model " << m.name << "]\n";
    const auto base = params_to_json(m.params);
    for (const auto& [key, value] : base.items()) {
      if (key == "seed") continue;
      out << (key == "model_kind" ? std::string("kind") : key) << " = " << scalar_text(value)
          << "\n";
    }
    for (const auto& [set, p] : m.per_set) {
      const auto doc = params_to_json(p);
      for (const auto& [key, value] : doc.items()) {
        if (key == "seed" || key == "model_kind" || value == base[key]) continue;
        out << set << "." << key << " = " << scalar_text(value) << "\n";
      }
    }
  }
  for (const auto& r : cfg.references) {
    out << "\n[reference " << r.name << "]\n";
    for (const auto& [set, path] : r.paths) out << set << " = " << path << "\n";
  }
  return out.str();
}

std::string params_summary(const ModelParams& p) {
  std::string s = "md=" + std::to_string(p.max_depth);
  if (p.kind == ModelKind::kGradientBoosting) {
    s += ", ne=" + std::to_string(p.n_estimators);
  } else {
    s += ", msl=" + std::to_string(p.min_samples_leaf);
  }
  return s;
}

nlohmann::ordered_json RunManifest::to_json() const {
  ordered_json doc;
  doc["tool"] = "treeconcord";
  doc["tool_version"] = tool_version;
  doc["hash_algorithm"] = "sha256";
  doc["config_sha256"] = config_sha256;
  doc["started_at"] = started_at;
  doc["finished_at"] = finished_at;
  doc["status"] = status;
  if (!error.empty()) doc["error"] = error;
  auto list = ordered_json::array();
  for (const auto& a : artifacts) {
    list.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
  }
  doc["artifacts"] = std::move(list);
  return doc;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw RuntimeError("SHA-256 computation failed");
  }
  static const char* const hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot read " + path.string());
  return sha256_hex(std::string{std::istreambuf_iterator<char>(in), {}});
}

Explanation explain(const EnsembleModel& m, const Dataset& data, XaiMethod method,
                    const ExplainOptions& opts, const std::string& model_id) {
  Explanation e;
  switch (method) {
    case XaiMethod::kMdi:
      e.importance = mdi(m);
      break;
    case XaiMethod::kMda:
      e.importance = mda(m, data, opts.mda_repeats, opts.seed);
      break;
    case XaiMethod::kShap:
      e.shap = shap_values(m, data);
      e.importance = shap_global(*e.shap);
      break;
    case XaiMethod::kLime: {
      LimeConfig cfg = opts.lime;
      cfg.seed = opts.seed;
      e.importance = lime_global(m, data, cfg);
      break;
    }
  }
  e.importance.model_id = model_id;
  return e;
}

ReportResult run_report(const PipelineConfig& cfg,
                        const std::filesystem::path& output_override, std::ostream* log) {
  cfg.validate();
  namespace fs = std::filesystem;
  ReportResult result;
  result.output_dir = output_override.empty() ? cfg.resolve(cfg.output) : output_override;
  const fs::path out = result.output_dir;
  fs::create_directories(out);

  RunManifest& manifest = result.manifest;
  const std::string config_text = config_to_text(cfg);
  manifest.config_sha256 = sha256_hex(config_text);
  manifest.started_at = utc_now();

  auto record = [&](const fs::path& path) {
    ArtifactRecord a;
    a.path = fs::relative(path, out).generic_string();
    a.sha256 = sha256_file(path);
    a.bytes = fs::file_size(path);
    manifest.artifacts.push_back(std::move(a));
  };
  auto note = [&](const std::string& line) {
    if (log) *log << line << "\n";
  };
  auto write_manifest = [&] {
    manifest.finished_at = utc_now();
    std::sort(manifest.artifacts.begin(), manifest.artifacts.end(),
              [](const auto& a, const auto& b) { return a.path < b.path; });
    write_text(out / "manifest.json", manifest.to_json().dump(2) + "\n");
  };

  const std::uint64_t seed = *cfg.seed;
  try {
    write_text(out / "config.ini", config_text);
    record(out / "config.ini");

    Schema schema = load_schema(cfg.resolve(cfg.schema));
    if (!cfg.target.empty()) schema.target_column = cfg.target;
    LoadSummary summary;
    const Dataset full = load_csv(cfg.resolve(cfg.data), schema, &summary);
    write_text(out / "data_summary.json", summary.to_json().dump(2) + "\n");
    record(out / "data_summary.json");
    note("loaded " + std::to_string(summary.rows_kept) + " of " +
         std::to_string(summary.rows_read) + " rows");

    AbbreviationMap abbreviations;
    if (!cfg.abbreviations.empty()) {
      abbreviations = load_abbreviations(cfg.resolve(cfg.abbreviations));
    }

    struct AccuracyRow {
      std::string model, params, feature_set;
      EvalReport report;
    };
    std::vector<AccuracyRow> rows;

    for (const auto& set_path : cfg.feature_sets) {
      const FeatureSet fset = load_feature_set(cfg.resolve(set_path));
      const Dataset data = select_features(full, fset);
      const SplitPair sp = split(data, cfg.test_fraction, seed, cfg.stratify);
      const fs::path set_dir = out / fset.name;
      fs::create_directories(set_dir);

      ordered_json split_doc;
      split_doc["seed"] = seed;
      split_doc["test_fraction"] = cfg.test_fraction;
      split_doc["stratify"] = cfg.stratify;
      split_doc["train_rows"] = sp.train_rows;
      split_doc["test_rows"] = sp.test_rows;
      write_text(set_dir / "split.json", split_doc.dump(2) + "\n");
      record(set_dir / "split.json");

      std::vector<WeightVector> references;
      for (const auto& ref : cfg.references) {
        const auto it = ref.paths.find(fset.name);
        if (it == ref.paths.end()) continue;
        auto ra = load_reference_ranking(cfg.resolve(it->second), fset, abbreviations);
        ra.label = ref.name;
        references.push_back(ranks_to_weights(ra, cfg.weights));
      }

      std::vector<WeightVector> set_vectors;
      for (const auto& spec : cfg.models) {
        ModelParams p = spec.params_for(fset.name);
        p.seed = seed;
        const fs::path cell = set_dir / spec.name;
        fs::create_directories(cell / "ranks");
        note("training " + spec.name + " on " + fset.name + " (" + params_summary(p) + ")");

        const EnsembleModel model = train_model(sp.train, p);
        save_model_file(model, cell / "model.json");
        record(cell / "model.json");

        const auto cm = confusion(predict_rows(model, sp.test.values), sp.test.target);
        const EvalReport report = evaluate(cm, cfg.averaging);
        ordered_json metrics;
        metrics["model"] = spec.name;
        metrics["parameters"] = params_summary(p);
        metrics["feature_set"] = fset.name;
        metrics["evaluated_on"] = "test";
        metrics.update(to_json(report));
        write_text(cell / "metrics.json", metrics.dump(2) + "\n");
        record(cell / "metrics.json");
        rows.push_back({spec.name, params_summary(p), capitalize(fset.name), report});

        std::vector<WeightVector> cell_vectors;
        for (const auto method : cfg.methods) {
          note("  " + to_string(method) + " for " + spec.name + " on " + fset.name);
          ExplainOptions opts{cfg.mda_repeats, cfg.lime, seed};
          const auto e = explain(model, sp.test, method, opts, spec.name);
          const fs::path imp = cell / ("importance_" + to_string(method) + ".json");
          save_importance(e.importance, imp);
          record(imp);
          if (e.shap) {
            write_shap_csv(*e.shap, cell / "shap_values.csv");
            record(cell / "shap_values.csv");
          }
          const std::string label = upper(to_string(method)) + "-" + spec.name;
          const auto ra = discretize(floor_negatives(e.importance), cfg.policy, label);
          const fs::path rank_file = cell / "ranks" / (label + ".csv");
          write_rank_csv(ra, rank_file,
                         {"source: " + fs::relative(imp, out).generic_string(),
                          cfg.policy.describe()});
          record(rank_file);
          cell_vectors.push_back(ranks_to_weights(ra, cfg.weights));
        }
        set_vectors.insert(set_vectors.end(), cell_vectors.begin(), cell_vectors.end());
        cell_vectors.insert(cell_vectors.end(), references.begin(), references.end());
        if (cell_vectors.size() >= 2) {
          const auto sm = similarity_matrix(cell_vectors);
          write_similarity_csv(sm, cell / "similarity.csv");
          write_similarity_json(sm, cell / "similarity.json");
          record(cell / "similarity.csv");
          record(cell / "similarity.json");
        }
        ++result.cells;
      }
      if (cfg.models.size() > 1) {
        set_vectors.insert(set_vectors.end(), references.begin(), references.end());
        const auto sm = similarity_matrix(set_vectors);
        write_similarity_csv(sm, set_dir / "similarity_all.csv");
        write_similarity_json(sm, set_dir / "similarity_all.json");
        record(set_dir / "similarity_all.csv");
        record(set_dir / "similarity_all.json");
      }
    }

    // Grouped by model, in config order.
    std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
      const auto rank = [&](const std::string& name) {
        return std::find_if(cfg.models.begin(), cfg.models.end(),
                            [&](const auto& m) { return m.name == name; }) -
               cfg.models.begin();
      };
      return rank(a.model) < rank(b.model);
    });
    std::string table = "Model,Parameters,Feature Set,Accuracy,Precision,Recall,F1\n";
    ordered_json table_doc = ordered_json::array();
    for (const auto& r : rows) {
      table += csv::join({r.model, r.params, r.feature_set, format2(r.report.accuracy),
                          format2(r.report.precision), format2(r.report.recall),
                          format2(r.report.f1)}) +
               "\n";
      table_doc.push_back({{"model", r.model},
                           {"parameters", r.params},
                           {"feature_set", r.feature_set},
                           {"accuracy", r.report.accuracy},
                           {"precision", r.report.precision},
                           {"recall", r.report.recall},
                           {"f1", r.report.f1}});
    }
    write_text(out / "accuracy_table.csv", table);
    write_text(out / "accuracy_table.json", table_doc.dump(2) + "\n");
    record(out / "accuracy_table.csv");
    record(out / "accuracy_table.json");
  } catch (const std::exception& e) {
    manifest.status = "failed";
    manifest.error = e.what();
    write_manifest();
    throw;
  }
  manifest.status = "complete";
  write_manifest();
  return result;
}

}  // namespace treeconcord
