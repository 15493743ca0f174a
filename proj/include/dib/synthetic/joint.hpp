#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dib/data/dataset.hpp"

namespace dib::synthetic {

inline constexpr std::size_t kMaxAlphabet = 16;
inline constexpr std::size_t kDefaultSampleCount = 10000;

struct FeatureAlphabet {
  std::string name;
  std::vector<std::string> values;
};

// Joint distribution over discrete features X = (X_1..X_n) and an outcome Y.
// Cells enumerate feature configurations with the last feature varying fastest.
class DiscreteJoint {
 public:
  // `marginal` has one entry per cell (empty means uniform); `conditional` has
  // one row of P(Y = y | cell) per cell.
  DiscreteJoint(std::vector<FeatureAlphabet> features, std::string outcome_name,
                std::vector<std::string> outcome_values, std::vector<double> marginal,
                std::vector<std::vector<double>> conditional);

  // {"features": [{"name", "values"}], "outcome": {"name", "values"},
  //  "p_y1": nested array indexed by feature values (binary outcome), or
  //  "conditional": [[P(y|cell)...] per cell], "marginal": [...] optional}.
  // Throws ConfigError naming the offending field path.
  static DiscreteJoint from_json(const nlohmann::json& doc);
  static DiscreteJoint load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::vector<FeatureAlphabet>& features() const noexcept { return features_; }
  const std::string& outcome_name() const noexcept { return outcome_name_; }
  const std::vector<std::string>& outcome_values() const noexcept { return outcome_values_; }
  std::size_t cell_count() const noexcept { return marginal_.size(); }
  std::size_t outcome_count() const noexcept { return outcome_values_.size(); }

  double marginal(std::size_t cell) const { return marginal_.at(cell); }
  double conditional(std::size_t cell, std::size_t y) const { return conditional_.at(cell).at(y); }
  double probability(std::size_t cell, std::size_t y) const { return marginal(cell) * conditional(cell, y); }

  // Feature value indices of a cell, and the inverse.
  std::vector<std::size_t> cell_values(std::size_t cell) const;
  std::size_t cell_index(std::span<const std::size_t> values) const;

 private:
  std::vector<FeatureAlphabet> features_;
  std::string outcome_name_;
  std::vector<std::string> outcome_values_;
  std::vector<double> marginal_;
  std::vector<std::vector<double>> conditional_;
};

// Shannon entropy in bits of a normalized distribution; 0 log 0 = 0.
// Throws ContractError when the input is not a distribution (tolerance 1e-9).
double entropy(std::span<const double> distribution);

std::vector<double> outcome_marginal(const DiscreteJoint& joint);
double outcome_entropy(const DiscreteJoint& joint);       // H(Y)
double conditional_entropy(const DiscreteJoint& joint);   // H(Y|X)
// Double-sum definition: sum p(x,y) log p(x,y) / (p(x) p(y)).
double mutual_information(const DiscreteJoint& joint);    // I(X;Y)
double feature_entropy(const DiscreteJoint& joint);       // H(X)
// I(X_i;Y) after marginalizing every other feature.
double standalone_feature_mi(const DiscreteJoint& joint, std::size_t feature);

struct Sample {
  std::vector<std::vector<std::size_t>> values;  // [row][feature] value index
  std::vector<std::size_t> outcomes;
};

Sample sample(const DiscreteJoint& joint, std::size_t n, std::uint64_t seed);

// Plug-in I(X;Y) from empirical cell/outcome frequencies, in bits.
double plug_in_mutual_information(const DiscreteJoint& joint, const Sample& s);

// Dataset text in the standard CSV format plus a matching schema.
std::string to_csv(const DiscreteJoint& joint, const Sample& s);
Schema schema_for(const DiscreteJoint& joint);
// The sample loaded through the regular ingestion path.
LoadedDataset to_dataset(const DiscreteJoint& joint, const Sample& s, std::array<double, 3> split = {0.8, 0.1, 0.1},
                         std::uint64_t split_seed = 0);

// Exact information quantities (bits, plus H(Y|X) and H(Y) in nats).
nlohmann::json ground_truth(const DiscreteJoint& joint);

// The asymmetric two-intervention joint used for acceptance: uniform binary
// A and B, P(Y=1 | A, B) = [[0.9, 0.7], [0.3, 0.1]] with A indexing rows.
DiscreteJoint acceptance_joint();

}  // namespace dib::synthetic
