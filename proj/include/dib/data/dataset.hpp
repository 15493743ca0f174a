#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dib/core/tensor.hpp"

namespace dib {

enum class FeatureKind { categorical, continuous };
enum class TaskKind { classification, binary, regression };

std::string to_string(FeatureKind kind);
std::string to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

inline const std::vector<double> kDefaultPositionalFrequencies{1.0, 2.0, 4.0, 8.0};
inline constexpr std::size_t kOneHotMaxCategories = 100;

// ---- schema ----------------------------------------------------------------

struct ColumnSchema {
  enum class Role { feature, target, ignored };

  std::string name;          // CSV header name
  std::string display_name;  // defaults to name
  Role role = Role::feature;
  FeatureKind kind = FeatureKind::continuous;
  // Declared vocabulary; when empty it is built from the file.
  std::vector<std::string> values;
};

// Declarative description of a CSV dataset. JSON form:
//   {"task": "binary", "split": [0.8, 0.1, 0.1], "seed": 0,
//    "positional_frequencies": [1, 2, 4, 8],
//    "columns": [{"name": "A", "kind": "categorical"},
//                {"name": "y", "kind": "categorical", "target": true},
//                {"name": "id", "kind": "ignore"}]}
struct Schema {
  std::vector<ColumnSchema> columns;
  TaskKind task = TaskKind::classification;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  std::vector<double> positional_frequencies = kDefaultPositionalFrequencies;
  std::size_t onehot_max_categories = kOneHotMaxCategories;
  std::vector<std::string> missing_tokens{"", "NA", "NaN", "nan", "?"};

  // Throws ConfigError naming the offending field path.
  static Schema from_json(const nlohmann::json& doc);
  static Schema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// ---- typed table -----------------------------------------------------------

struct FeatureSpec {
  std::string name;
  std::string display_name;
  FeatureKind kind = FeatureKind::continuous;
  std::vector<std::string> vocabulary;
  // Categorical features above the one-hot limit are fed as standardized
  // integer codes through the continuous path.
  bool coded_as_continuous = false;
  double mean = 0.0;
  double std = 1.0;
  std::vector<double> positional_frequencies;

  std::size_t cardinality() const noexcept { return vocabulary.size(); }
  bool uses_continuous_path() const noexcept {
    return kind == FeatureKind::continuous || coded_as_continuous;
  }
  std::size_t encoded_width() const noexcept;
  std::optional<std::size_t> code_of(std::string_view value) const;
};

struct TargetSpec {
  std::string name;
  TaskKind task = TaskKind::classification;
  std::vector<std::string> classes;  // classification only
  double mean = 0.0;                 // regression only, training split
  double std = 1.0;

  std::size_t output_width() const noexcept {
    return task == TaskKind::regression ? 1 : classes.size();
  }
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// Immutable once loaded. Categorical columns hold vocabulary indices,
// continuous columns hold raw (unstandardized) values.
struct DatasetTable {
  std::vector<FeatureSpec> features;
  TargetSpec target;
  std::vector<std::vector<double>> columns;
  std::vector<double> targets;  // class index, or raw regression value
  std::size_t rejected_rows = 0;

  std::size_t row_count() const noexcept { return targets.size(); }
  TaskKind task() const noexcept { return target.task; }
  // Matches either the column name or the display name.
  std::optional<std::size_t> feature_index(std::string_view name) const;
  std::vector<std::string> feature_names() const;
};

struct LoadedDataset {
  DatasetTable table;
  SplitIndices splits;
};

// Parses the CSV, drops rows with missing cells (counted in rejected_rows),
// builds vocabularies from the whole file, splits with the schema's fractions
// and seed, and fits standardization on the training split only.
LoadedDataset load_csv(const std::filesystem::path& path, const Schema& schema);
LoadedDataset load_csv_text(std::string_view text, const Schema& schema);

// Deterministic shuffle by seed, then contiguous train/validation/test blocks.
SplitIndices split(std::size_t row_count, std::array<double, 3> fractions, std::uint64_t seed);
SplitIndices split(const DatasetTable& table, std::array<double, 3> fractions, std::uint64_t seed);

// Stable hex digest of the resolved feature and target specs.
std::string schema_hash(const DatasetTable& table);

nlohmann::json to_json(const FeatureSpec& spec);
FeatureSpec feature_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const TargetSpec& spec);
TargetSpec target_spec_from_json(const nlohmann::json& doc);

// ---- encoding ----------------------------------------------------------------

// [sin(w1 z), sin(w2 z), ...]; the raw z when no frequencies are given.
std::vector<double> positional_encode(double z, std::span<const double> frequencies);

// One-hot over the vocabulary; all zeros for an unseen value. Features above
// the one-hot limit take the standardized-code path instead.
std::vector<double> encode_categorical(std::string_view value, const FeatureSpec& spec);

// Standardize with the training statistics, then positionally encode.
std::vector<double> encode_continuous(double raw, const FeatureSpec& spec);

// Encodes a stored column value (category index or raw value) into `out`,
// which must hold spec.encoded_width() entries.
void encode_stored(const FeatureSpec& spec, double stored, std::span<double> out);

// Inverse of the one-hot path: the vocabulary entry at the hot position.
std::optional<std::string> decode_one_hot(std::span<const double> encoded, const FeatureSpec& spec);

// [rows.size(), encoded_width] matrix for one feature.
Tensor encode_column(const DatasetTable& table, std::size_t feature, std::span<const std::size_t> rows);

// Throws IngestionError if two distinct standardized values in [-5, 5] map to
// the same positional code (within 1e-9 per component).
void check_positional_injectivity(const FeatureSpec& spec, std::span<const double> standardized);

}  // namespace dib
