#include "dib/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "dib/core/rng.hpp"
#include "dib/errors.hpp"
#include "dib/io/csv.hpp"

namespace dib {

namespace {

constexpr std::uint64_t kSplitStream = 0x5b117;
constexpr double kInjectivityRange = 5.0;
constexpr double kInjectivityTolerance = 1e-9;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

// Numeric vocabularies sort by value (so hours run 0..23), others lexicographically.
void sort_vocabulary(std::vector<std::string>& vocab) {
  std::vector<double> numeric;
  numeric.reserve(vocab.size());
  for (const auto& v : vocab) {
    auto x = parse_number(v);
    if (!x) {
      std::sort(vocab.begin(), vocab.end());
      return;
    }
    numeric.push_back(*x);
  }
  std::vector<std::size_t> order(vocab.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return numeric[a] != numeric[b] ? numeric[a] < numeric[b] : vocab[a] < vocab[b];
  });
  std::vector<std::string> sorted;
  sorted.reserve(vocab.size());
  for (std::size_t i : order) sorted.push_back(std::move(vocab[i]));
  vocab = std::move(sorted);
}

std::string json_string(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw ConfigError("schema: " + path + ": " + what);
}

std::vector<double> read_positive_list(const nlohmann::json& v, const std::string& path) {
  if (!v.is_array()) schema_error(path, "expected an array of positive numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number() || !(v[i].get<double>() > 0.0)) {
      schema_error(path + "[" + std::to_string(i) + "]", "expected a positive number");
    }
    out.push_back(v[i].get<double>());
  }
  return out;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::pair<double, double> mean_and_std(const std::vector<double>& column,
                                       std::span<const std::size_t> rows) {
  double mean = 0.0;
  for (std::size_t r : rows) mean += column[r];
  mean /= static_cast<double>(rows.size());
  double var = 0.0;
  for (std::size_t r : rows) var += (column[r] - mean) * (column[r] - mean);
  var /= static_cast<double>(rows.size());
  return {mean, std::sqrt(var)};
}

}  // namespace

// ---- enums -----------------------------------------------------------------

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::categorical ? "categorical" : "continuous";
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::classification: return "classification";
    case TaskKind::binary: return "binary";
    case TaskKind::regression: return "regression";
  }
  return "classification";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "classification") return TaskKind::classification;
  if (text == "binary") return TaskKind::binary;
  if (text == "regression") return TaskKind::regression;
  throw ConfigError("unknown task kind '" + std::string(text) +
                    "' (expected classification, binary or regression)");
}

// ---- schema ------------------------------------------------------------------

Schema Schema::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) schema_error("$", "expected an object");
  Schema schema;

  if (!doc.contains("task") || !doc["task"].is_string()) schema_error("task", "required string");
  try {
    schema.task = parse_task_kind(doc["task"].get<std::string>());
  } catch (const ConfigError& e) {
    schema_error("task", e.what());
  }

  if (doc.contains("split")) {
    const auto& s = doc["split"];
    if (!s.is_array() || s.size() != 3) schema_error("split", "expected [train, validation, test]");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!s[i].is_number() || !(s[i].get<double>() > 0.0)) {
        schema_error("split[" + std::to_string(i) + "]", "expected a positive fraction");
      }
      schema.split[i] = s[i].get<double>();
    }
    if (std::abs(schema.split[0] + schema.split[1] + schema.split[2] - 1.0) > 1e-9) {
      schema_error("split", "fractions must sum to 1");
    }
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) schema_error("seed", "expected a non-negative integer");
    schema.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("positional_frequencies")) {
    schema.positional_frequencies =
        read_positive_list(doc["positional_frequencies"], "positional_frequencies");
  }
  if (doc.contains("onehot_max_categories")) {
    if (!doc["onehot_max_categories"].is_number_unsigned()) {
      schema_error("onehot_max_categories", "expected a non-negative integer");
    }
    schema.onehot_max_categories = doc["onehot_max_categories"].get<std::size_t>();
  }
  if (doc.contains("missing_values")) {
    const auto& m = doc["missing_values"];
    if (!m.is_array()) schema_error("missing_values", "expected an array of strings");
    schema.missing_tokens.clear();
    for (const auto& t : m) schema.missing_tokens.push_back(json_string(t));
  }

  if (!doc.contains("columns") || !doc["columns"].is_array() || doc["columns"].empty()) {
    schema_error("columns", "required non-empty array");
  }
  std::set<std::string> seen;
  std::size_t targets = 0;
  for (std::size_t i = 0; i < doc["columns"].size(); ++i) {
    const auto& c = doc["columns"][i];
    const std::string path = "columns[" + std::to_string(i) + "]";
    if (!c.is_object()) schema_error(path, "expected an object");
    if (!c.contains("name") || !c["name"].is_string()) schema_error(path + ".name", "required string");
    ColumnSchema col;
    col.name = c["name"].get<std::string>();
    if (!seen.insert(col.name).second) schema_error(path + ".name", "duplicate column '" + col.name + "'");
    col.display_name = col.name;
    if (c.contains("display_name")) {
      if (!c["display_name"].is_string()) schema_error(path + ".display_name", "expected a string");
      col.display_name = c["display_name"].get<std::string>();
    }
    if (!c.contains("kind") || !c["kind"].is_string()) schema_error(path + ".kind", "required string");
    const std::string kind = c["kind"].get<std::string>();
    if (kind == "categorical") {
      col.kind = FeatureKind::categorical;
    } else if (kind == "continuous") {
      col.kind = FeatureKind::continuous;
    } else if (kind == "ignore") {
      col.role = ColumnSchema::Role::ignored;
    } else {
      schema_error(path + ".kind", "expected categorical, continuous or ignore, got '" + kind + "'");
    }
    if (c.contains("target")) {
      if (!c["target"].is_boolean()) schema_error(path + ".target", "expected a boolean");
      if (c["target"].get<bool>()) {
        if (col.role == ColumnSchema::Role::ignored) schema_error(path, "target column cannot be ignored");
        col.role = ColumnSchema::Role::target;
        ++targets;
      }
    }
    if (c.contains("values")) {
      if (!c["values"].is_array()) schema_error(path + ".values", "expected an array");
      for (const auto& v : c["values"]) col.values.push_back(json_string(v));
      if (col.kind != FeatureKind::categorical) schema_error(path + ".values", "only categorical columns take values");
    }
    schema.columns.push_back(std::move(col));
  }
  if (targets != 1) schema_error("columns", "exactly one column must be marked \"target\": true");
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    const auto& col = schema.columns[i];
    if (col.role != ColumnSchema::Role::target) continue;
    const bool want_categorical = schema.task != TaskKind::regression;
    if ((col.kind == FeatureKind::categorical) != want_categorical) {
      schema_error("columns[" + std::to_string(i) + "].kind",
                   "target of a " + to_string(schema.task) + " task must be " +
                       (want_categorical ? "categorical" : "continuous"));
    }
  }
  return schema;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("schema '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json j;
    j["name"] = c.name;
    if (c.display_name != c.name) j["display_name"] = c.display_name;
    j["kind"] = c.role == ColumnSchema::Role::ignored ? "ignore" : to_string(c.kind);
    if (c.role == ColumnSchema::Role::target) j["target"] = true;
    if (!c.values.empty()) j["values"] = c.values;
    cols.push_back(std::move(j));
  }
  return {{"task", to_string(task)},
          {"split", split},
          {"seed", seed},
          {"positional_frequencies", positional_frequencies},
          {"onehot_max_categories", onehot_max_categories},
          {"missing_values", missing_tokens},
          {"columns", std::move(cols)}};
}

// ---- specs -------------------------------------------------------------------

std::size_t FeatureSpec::encoded_width() const noexcept {
  if (!uses_continuous_path()) return vocabulary.size();
  return positional_frequencies.empty() ? 1 : positional_frequencies.size();
}

std::optional<std::size_t> FeatureSpec::code_of(std::string_view value) const {
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    if (vocabulary[i] == value) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> DatasetTable::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name || features[i].display_name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> DatasetTable::feature_names() const {
  std::vector<std::string> names;
  for (const auto& f : features) names.push_back(f.display_name);
  return names;
}

nlohmann::json to_json(const FeatureSpec& spec) {
  nlohmann::json j{{"name", spec.name},
                   {"display_name", spec.display_name},
                   {"kind", to_string(spec.kind)},
                   {"positional_frequencies", spec.positional_frequencies}};
  if (spec.kind == FeatureKind::categorical) {
    j["vocabulary"] = spec.vocabulary;
    j["coded_as_continuous"] = spec.coded_as_continuous;
  }
  if (spec.uses_continuous_path()) {
    j["mean"] = spec.mean;
    j["std"] = spec.std;
  }
  return j;
}

FeatureSpec feature_spec_from_json(const nlohmann::json& j) {
  FeatureSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.display_name = j.value("display_name", spec.name);
    spec.kind = j.at("kind").get<std::string>() == "categorical" ? FeatureKind::categorical
                                                                 : FeatureKind::continuous;
    spec.positional_frequencies = j.value("positional_frequencies", std::vector<double>{});
    spec.vocabulary = j.value("vocabulary", std::vector<std::string>{});
    spec.coded_as_continuous = j.value("coded_as_continuous", false);
    spec.mean = j.value("mean", 0.0);
    spec.std = j.value("std", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed feature spec: ") + e.what());
  }
  return spec;
}

nlohmann::json to_json(const TargetSpec& spec) {
  nlohmann::json j{{"name", spec.name}, {"task", to_string(spec.task)}};
  if (spec.task == TaskKind::regression) {
    j["mean"] = spec.mean;
    j["std"] = spec.std;
  } else {
    j["classes"] = spec.classes;
  }
  return j;
}

TargetSpec target_spec_from_json(const nlohmann::json& j) {
  TargetSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.task = parse_task_kind(j.at("task").get<std::string>());
    spec.classes = j.value("classes", std::vector<std::string>{});
    spec.mean = j.value("mean", 0.0);
    spec.std = j.value("std", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed target spec: ") + e.what());
  }
  return spec;
}

std::string schema_hash(const DatasetTable& table) {
  nlohmann::json j;
  j["features"] = nlohmann::json::array();
  for (const auto& f : table.features) j["features"].push_back(to_json(f));
  j["target"] = to_json(table.target);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

// ---- split -------------------------------------------------------------------

SplitIndices split(std::size_t row_count, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const auto n = static_cast<double>(row_count);
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * n));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * n));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= row_count) {
    throw ConfigError("split of " + std::to_string(row_count) + " rows leaves an empty partition");
  }
  std::vector<std::size_t> perm(row_count);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, kSplitStream);
  for (std::size_t i = row_count - 1; i > 0; --i) {
    std::swap(perm[i], perm[rng.below(i + 1)]);
  }
  SplitIndices out;
  out.seed = seed;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                        perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return out;
}

SplitIndices split(const DatasetTable& table, std::array<double, 3> fractions, std::uint64_t seed) {
  return split(table.row_count(), fractions, seed);
}

// ---- loading -------------------------------------------------------------------

LoadedDataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_csv_text(text, schema);
}

LoadedDataset load_csv_text(std::string_view text, const Schema& schema) {
  const csv::Document doc = csv::parse(text);

  std::unordered_map<std::string, std::size_t> header_index;
  for (std::size_t i = 0; i < doc.header.size(); ++i) {
    const std::string name(trim(doc.header[i]));
    const bool known = std::any_of(schema.columns.begin(), schema.columns.end(),
                                   [&](const ColumnSchema& c) { return c.name == name; });
    if (!known) throw IngestionError("unknown column not declared in the schema", 1, name);
    if (!header_index.emplace(name, i).second) throw IngestionError("duplicate header column", 1, name);
  }
  for (const auto& c : schema.columns) {
    if (!header_index.contains(c.name)) throw IngestionError("schema column missing from the header", 1, c.name);
  }

  std::vector<const ColumnSchema*> feature_cols;
  const ColumnSchema* target_col = nullptr;
  for (const auto& c : schema.columns) {
    if (c.role == ColumnSchema::Role::feature) feature_cols.push_back(&c);
    if (c.role == ColumnSchema::Role::target) target_col = &c;
  }
  if (feature_cols.empty()) throw ConfigError("schema declares no feature columns");
  if (!target_col) throw ConfigError("schema declares no target column");

  std::vector<const ColumnSchema*> used = feature_cols;
  used.push_back(target_col);
  const std::set<std::string> missing(schema.missing_tokens.begin(), schema.missing_tokens.end());

  // Per used column: raw strings (categorical) or parsed numbers (continuous).
  std::vector<std::vector<std::string>> text_cols(used.size());
  std::vector<std::vector<double>> num_cols(used.size());
  std::vector<std::size_t> lines;
  std::size_t rejected = 0;

  for (const auto& rec : doc.records) {
    if (rec.fields.size() != doc.header.size()) {
      throw IngestionError("expected " + std::to_string(doc.header.size()) + " fields, found " +
                               std::to_string(rec.fields.size()),
                           rec.line);
    }
    bool has_missing = false;
    for (const auto* c : used) {
      if (missing.contains(std::string(trim(rec.fields[header_index.at(c->name)])))) {
        has_missing = true;
        break;
      }
    }
    if (has_missing) {
      ++rejected;
      continue;
    }
    for (std::size_t u = 0; u < used.size(); ++u) {
      const std::string_view field = trim(rec.fields[header_index.at(used[u]->name)]);
      if (used[u]->kind == FeatureKind::categorical) {
        text_cols[u].emplace_back(field);
      } else {
        auto value = parse_number(field);
        if (!value) {
          throw IngestionError("cannot parse '" + std::string(field) + "' as a number", rec.line,
                               used[u]->name);
        }
        num_cols[u].push_back(*value);
      }
    }
    lines.push_back(rec.line);
  }
  const std::size_t n = lines.size();
  if (n == 0) throw IngestionError("no complete rows in the file");

  auto build_vocabulary = [&](std::size_t u) {
    const ColumnSchema& c = *used[u];
    std::vector<std::string> vocab = c.values;
    if (vocab.empty()) {
      std::set<std::string> distinct(text_cols[u].begin(), text_cols[u].end());
      vocab.assign(distinct.begin(), distinct.end());
      sort_vocabulary(vocab);
    }
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], i);
    std::vector<double> codes(n);
    for (std::size_t r = 0; r < n; ++r) {
      auto it = index.find(text_cols[u][r]);
      if (it == index.end()) {
        throw IngestionError("value '" + text_cols[u][r] + "' not in the declared values", lines[r],
                             c.name);
      }
      codes[r] = static_cast<double>(it->second);
    }
    return std::pair{std::move(vocab), std::move(codes)};
  };

  LoadedDataset out;
  DatasetTable& table = out.table;
  table.rejected_rows = rejected;

  for (std::size_t u = 0; u + 1 < used.size(); ++u) {
    const ColumnSchema& c = *used[u];
    FeatureSpec spec;
    spec.name = c.name;
    spec.display_name = c.display_name;
    spec.kind = c.kind;
    if (c.kind == FeatureKind::categorical) {
      auto [vocab, codes] = build_vocabulary(u);
      if (vocab.size() < 2) {
        throw IngestionError("categorical column needs at least 2 distinct values", 0, c.name);
      }
      spec.vocabulary = std::move(vocab);
      spec.coded_as_continuous = spec.vocabulary.size() > schema.onehot_max_categories;
      table.columns.push_back(std::move(codes));
    } else {
      table.columns.push_back(std::move(num_cols[u]));
    }
    if (spec.uses_continuous_path()) spec.positional_frequencies = schema.positional_frequencies;
    table.features.push_back(std::move(spec));
  }

  const std::size_t t = used.size() - 1;
  table.target.name = target_col->name;
  table.target.task = schema.task;
  if (schema.task == TaskKind::regression) {
    table.targets = std::move(num_cols[t]);
  } else {
    auto [classes, codes] = build_vocabulary(t);
    if (schema.task == TaskKind::binary && classes.size() != 2) {
      throw IngestionError("binary target needs exactly 2 classes (declare \"values\" when one is absent)",
                           0, target_col->name);
    }
    table.target.classes = std::move(classes);
    table.targets = std::move(codes);
  }

  out.splits = split(n, schema.split, schema.seed);
  const auto& train = out.splits.train;

  for (std::size_t f = 0; f < table.features.size(); ++f) {
    FeatureSpec& spec = table.features[f];
    if (!spec.uses_continuous_path()) continue;
    const auto [mean, sd] = mean_and_std(table.columns[f], train);
    if (!(sd > 0.0)) throw IngestionError("constant continuous column on the training split", 0, spec.name);
    spec.mean = mean;
    spec.std = sd;
    std::vector<double> standardized;
    standardized.reserve(train.size());
    for (std::size_t r : train) standardized.push_back((table.columns[f][r] - mean) / sd);
    check_positional_injectivity(spec, standardized);
  }
  if (schema.task == TaskKind::regression) {
    const auto [mean, sd] = mean_and_std(table.targets, train);
    if (!(sd > 0.0)) throw IngestionError("constant regression target on the training split", 0, target_col->name);
    table.target.mean = mean;
    table.target.std = sd;
  }
  return out;
}

// ---- encoding ------------------------------------------------------------------

std::vector<double> positional_encode(double z, std::span<const double> frequencies) {
  if (frequencies.empty()) return {z};
  std::vector<double> out(frequencies.size());
  for (std::size_t k = 0; k < frequencies.size(); ++k) out[k] = std::sin(frequencies[k] * z);
  return out;
}

void encode_stored(const FeatureSpec& spec, double stored, std::span<double> out) {
  if (out.size() != spec.encoded_width()) throw DimensionError("encode_stored: wrong output width");
  if (spec.uses_continuous_path()) {
    const double z = (stored - spec.mean) / spec.std;
    if (spec.positional_frequencies.empty()) {
      out[0] = z;
    } else {
      for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::sin(spec.positional_frequencies[k] * z);
    }
    return;
  }
  std::fill(out.begin(), out.end(), 0.0);
  if (stored >= 0.0 && stored < static_cast<double>(out.size())) out[static_cast<std::size_t>(stored)] = 1.0;
}

std::vector<double> encode_categorical(std::string_view value, const FeatureSpec& spec) {
  if (spec.kind != FeatureKind::categorical) {
    throw ContractError("encode_categorical on continuous feature '" + spec.name + "'");
  }
  std::vector<double> out(spec.encoded_width(), 0.0);
  if (auto code = spec.code_of(value)) encode_stored(spec, static_cast<double>(*code), out);
  return out;
}

std::vector<double> encode_continuous(double raw, const FeatureSpec& spec) {
  if (spec.kind != FeatureKind::continuous) {
    throw ContractError("encode_continuous on categorical feature '" + spec.name + "'");
  }
  std::vector<double> out(spec.encoded_width());
  encode_stored(spec, raw, out);
  return out;
}

std::optional<std::string> decode_one_hot(std::span<const double> encoded, const FeatureSpec& spec) {
  if (spec.uses_continuous_path() || encoded.size() != spec.cardinality()) return std::nullopt;
  std::optional<std::size_t> hot;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    if (encoded[i] == 1.0 && !hot) {
      hot = i;
    } else if (encoded[i] != 0.0) {
      return std::nullopt;
    }
  }
  if (!hot) return std::nullopt;
  return spec.vocabulary[*hot];
}

Tensor encode_column(const DatasetTable& table, std::size_t feature, std::span<const std::size_t> rows) {
  const FeatureSpec& spec = table.features.at(feature);
  const std::size_t w = spec.encoded_width();
  Tensor out({rows.size(), w});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    encode_stored(spec, table.columns[feature][rows[i]], std::span<double>(out.data() + i * w, w));
  }
  return out;
}

void check_positional_injectivity(const FeatureSpec& spec, std::span<const double> standardized) {
  if (spec.positional_frequencies.empty()) return;
  std::vector<double> values;
  for (double z : standardized) {
    if (std::abs(z) <= kInjectivityRange) values.push_back(z);
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<std::vector<double>> codes;
  codes.reserve(values.size());
  for (double z : values) codes.push_back(positional_encode(z, spec.positional_frequencies));
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return codes[a][0] < codes[b][0]; });
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const auto& a = codes[order[i]];
      const auto& b = codes[order[j]];
      if (b[0] - a[0] > kInjectivityTolerance) break;
      bool same = true;
      for (std::size_t k = 0; k < a.size() && same; ++k) same = std::abs(a[k] - b[k]) <= kInjectivityTolerance;
      if (same) {
        throw IngestionError("positional encoding is not injective: standardized values " +
                                 csv::format_double(values[order[i]]) + " and " +
                                 csv::format_double(values[order[j]]) + " share a code",
                             0, spec.name);
      }
    }
  }
}

}  // namespace dib
