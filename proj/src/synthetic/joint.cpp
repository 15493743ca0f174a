#include "dib/synthetic/joint.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dib/core/rng.hpp"
#include "dib/errors.hpp"
#include "dib/io/csv.hpp"

namespace dib::synthetic {

namespace {

using json = nlohmann::json;

constexpr double kNormTolerance = 1e-9;
constexpr std::uint64_t kSampleStream = 0x5a3b1e;

double xlog2x_ratio(double p, double q) { return p > 0.0 ? p * std::log2(p / q) : 0.0; }

void check_probabilities(std::span<const double> ps, const std::string& where) {
  double total = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!(ps[i] >= 0.0 && ps[i] <= 1.0)) {
      throw ConfigError(where + "[" + std::to_string(i) + "]: probability must lie in [0, 1]");
    }
    total += ps[i];
  }
  if (std::abs(total - 1.0) > kNormTolerance) {
    throw ConfigError(where + ": probabilities sum to " + csv::format_double(total) + ", expected 1");
  }
}

void normalize(std::vector<double>& ps) {
  const double total = std::accumulate(ps.begin(), ps.end(), 0.0);
  for (double& p : ps) p /= total;
}

std::size_t draw(std::span<const double> ps, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < ps.size(); ++i) {
    acc += ps[i];
    if (u < acc) return i;
  }
  // Trailing zero-probability entries are never chosen.
  std::size_t last = ps.size() - 1;
  while (last > 0 && ps[last] == 0.0) --last;
  return last;
}

std::vector<std::string> string_list(const json& doc, const std::string& where) {
  if (!doc.is_array()) throw ConfigError(where + ": expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& v = doc[i];
    if (v.is_string()) out.push_back(v.get<std::string>());
    else if (v.is_number_integer()) out.push_back(std::to_string(v.get<long long>()));
    else throw ConfigError(where + "[" + std::to_string(i) + "]: expected a string");
  }
  return out;
}

double probability_at(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

// Walks the nested p_y1 array in cell order.
void flatten_nested(const json& node, const std::vector<FeatureAlphabet>& features, std::size_t depth,
                    const std::string& where, std::vector<double>& out) {
  if (depth == features.size()) {
    out.push_back(probability_at(node, where));
    return;
  }
  if (!node.is_array() || node.size() != features[depth].values.size()) {
    throw ConfigError(where + ": expected an array of " + std::to_string(features[depth].values.size()) +
                      " entries for feature '" + features[depth].name + "'");
  }
  for (std::size_t i = 0; i < node.size(); ++i) {
    flatten_nested(node[i], features, depth + 1, where + "[" + std::to_string(i) + "]", out);
  }
}

}  // namespace

DiscreteJoint::DiscreteJoint(std::vector<FeatureAlphabet> features, std::string outcome_name,
                             std::vector<std::string> outcome_values, std::vector<double> marginal,
                             std::vector<std::vector<double>> conditional)
    : features_(std::move(features)),
      outcome_name_(std::move(outcome_name)),
      outcome_values_(std::move(outcome_values)),
      marginal_(std::move(marginal)),
      conditional_(std::move(conditional)) {
  if (features_.empty()) throw ConfigError("features: at least one feature is required");
  std::set<std::string> names{outcome_name_};
  std::size_t cells = 1;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& f = features_[i];
    const std::string where = "features[" + std::to_string(i) + "]";
    if (f.name.empty()) throw ConfigError(where + ".name: must not be empty");
    if (!names.insert(f.name).second) throw ConfigError(where + ".name: duplicate name '" + f.name + "'");
    if (f.values.empty() || f.values.size() > kMaxAlphabet) {
      throw ConfigError(where + ".values: alphabet size must be between 1 and " + std::to_string(kMaxAlphabet));
    }
    if (std::set<std::string>(f.values.begin(), f.values.end()).size() != f.values.size()) {
      throw ConfigError(where + ".values: duplicate value");
    }
    cells *= f.values.size();
  }
  if (outcome_values_.size() < 2) throw ConfigError("outcome.values: need at least two outcomes");
  if (std::set<std::string>(outcome_values_.begin(), outcome_values_.end()).size() != outcome_values_.size()) {
    throw ConfigError("outcome.values: duplicate value");
  }

  if (marginal_.empty()) marginal_.assign(cells, 1.0 / static_cast<double>(cells));
  if (marginal_.size() != cells) {
    throw ConfigError("marginal: expected " + std::to_string(cells) + " entries, got " +
                      std::to_string(marginal_.size()));
  }
  check_probabilities(marginal_, "marginal");
  normalize(marginal_);

  if (conditional_.size() != cells) {
    throw ConfigError("conditional: expected " + std::to_string(cells) + " rows, got " +
                      std::to_string(conditional_.size()));
  }
  for (std::size_t c = 0; c < cells; ++c) {
    const std::string where = "conditional[" + std::to_string(c) + "]";
    if (conditional_[c].size() != outcome_values_.size()) {
      throw ConfigError(where + ": expected " + std::to_string(outcome_values_.size()) + " entries");
    }
    check_probabilities(conditional_[c], where);
    normalize(conditional_[c]);
  }
}

DiscreteJoint DiscreteJoint::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("joint spec: expected a JSON object");
  if (!doc.contains("features")) throw ConfigError("features: missing");
  const json& fs = doc.at("features");
  if (!fs.is_array()) throw ConfigError("features: expected an array");
  std::vector<FeatureAlphabet> features;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const std::string where = "features[" + std::to_string(i) + "]";
    const json& f = fs[i];
    if (!f.is_object() || !f.contains("name") || !f.at("name").is_string()) {
      throw ConfigError(where + ".name: expected a string");
    }
    if (!f.contains("values")) throw ConfigError(where + ".values: missing");
    features.push_back({f.at("name").get<std::string>(), string_list(f.at("values"), where + ".values")});
  }

  std::string outcome_name = "y";
  std::vector<std::string> outcome_values{"0", "1"};
  if (doc.contains("outcome")) {
    const json& o = doc.at("outcome");
    if (!o.is_object()) throw ConfigError("outcome: expected an object");
    if (o.contains("name")) {
      if (!o.at("name").is_string()) throw ConfigError("outcome.name: expected a string");
      outcome_name = o.at("name").get<std::string>();
    }
    if (o.contains("values")) outcome_values = string_list(o.at("values"), "outcome.values");
  }

  std::vector<double> marginal;
  if (doc.contains("marginal")) {
    const json& m = doc.at("marginal");
    if (!m.is_array()) throw ConfigError("marginal: expected an array");
    for (std::size_t i = 0; i < m.size(); ++i) {
      marginal.push_back(probability_at(m[i], "marginal[" + std::to_string(i) + "]"));
    }
  }

  std::vector<std::vector<double>> conditional;
  const bool has_p = doc.contains("p_y1");
  const bool has_c = doc.contains("conditional");
  if (has_p == has_c) throw ConfigError("joint spec: give exactly one of 'p_y1' or 'conditional'");
  if (has_p) {
    if (outcome_values.size() != 2) throw ConfigError("p_y1: only valid for a binary outcome");
    std::vector<double> flat;
    flatten_nested(doc.at("p_y1"), features, 0, "p_y1", flat);
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (!(flat[i] >= 0.0 && flat[i] <= 1.0)) {
        throw ConfigError("p_y1: entry " + std::to_string(i) + " must lie in [0, 1]");
      }
      conditional.push_back({1.0 - flat[i], flat[i]});
    }
  } else {
    const json& rows = doc.at("conditional");
    if (!rows.is_array()) throw ConfigError("conditional: expected an array of rows");
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const std::string where = "conditional[" + std::to_string(c) + "]";
      if (!rows[c].is_array()) throw ConfigError(where + ": expected an array");
      std::vector<double> row;
      for (std::size_t y = 0; y < rows[c].size(); ++y) {
        row.push_back(probability_at(rows[c][y], where + "[" + std::to_string(y) + "]"));
      }
      conditional.push_back(std::move(row));
    }
  }
  return DiscreteJoint(std::move(features), std::move(outcome_name), std::move(outcome_values),
                       std::move(marginal), std::move(conditional));
}

DiscreteJoint DiscreteJoint::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read joint spec " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("joint spec " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json DiscreteJoint::to_json() const {
  json fs = json::array();
  for (const auto& f : features_) fs.push_back({{"name", f.name}, {"values", f.values}});
  return {{"features", fs},
          {"outcome", {{"name", outcome_name_}, {"values", outcome_values_}}},
          {"marginal", marginal_},
          {"conditional", conditional_}};
}

std::vector<std::size_t> DiscreteJoint::cell_values(std::size_t cell) const {
  if (cell >= cell_count()) throw ContractError("cell index out of range");
  std::vector<std::size_t> out(features_.size());
  for (std::size_t i = features_.size(); i-- > 0;) {
    const std::size_t k = features_[i].values.size();
    out[i] = cell % k;
    cell /= k;
  }
  return out;
}

std::size_t DiscreteJoint::cell_index(std::span<const std::size_t> values) const {
  if (values.size() != features_.size()) throw ContractError("cell_index: wrong number of feature values");
  std::size_t cell = 0;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (values[i] >= features_[i].values.size()) throw ContractError("cell_index: value index out of range");
    cell = cell * features_[i].values.size() + values[i];
  }
  return cell;
}

// ---- information quantities ----------------------------------------------------

double entropy(std::span<const double> distribution) {
  double total = 0.0;
  for (double p : distribution) {
    if (!(p >= 0.0)) throw ContractError("entropy: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kNormTolerance) throw ContractError("entropy: distribution is not normalized");
  double h = 0.0;
  for (double p : distribution) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

std::vector<double> outcome_marginal(const DiscreteJoint& joint) {
  std::vector<double> py(joint.outcome_count(), 0.0);
  for (std::size_t c = 0; c < joint.cell_count(); ++c) {
    for (std::size_t y = 0; y < py.size(); ++y) py[y] += joint.probability(c, y);
  }
  return py;
}

double outcome_entropy(const DiscreteJoint& joint) { return entropy(outcome_marginal(joint)); }

double conditional_entropy(const DiscreteJoint& joint) {
  double h = 0.0;
  for (std::size_t c = 0; c < joint.cell_count(); ++c) {
    if (joint.marginal(c) == 0.0) continue;
    std::vector<double> row(joint.outcome_count());
    for (std::size_t y = 0; y < row.size(); ++y) row[y] = joint.conditional(c, y);
    h += joint.marginal(c) * entropy(row);
  }
  return h;
}

double mutual_information(const DiscreteJoint& joint) {
  const std::vector<double> py = outcome_marginal(joint);
  double mi = 0.0;
  for (std::size_t c = 0; c < joint.cell_count(); ++c) {
    for (std::size_t y = 0; y < py.size(); ++y) {
      mi += xlog2x_ratio(joint.probability(c, y), joint.marginal(c) * py[y]);
    }
  }
  return mi;
}

double feature_entropy(const DiscreteJoint& joint) {
  std::vector<double> px(joint.cell_count());
  for (std::size_t c = 0; c < px.size(); ++c) px[c] = joint.marginal(c);
  return entropy(px);
}

double standalone_feature_mi(const DiscreteJoint& joint, std::size_t feature) {
  if (feature >= joint.features().size()) throw ContractError("standalone_feature_mi: feature index out of range");
  const std::size_t k = joint.features()[feature].values.size();
  const std::size_t m = joint.outcome_count();
  std::vector<double> pxy(k * m, 0.0);
  for (std::size_t c = 0; c < joint.cell_count(); ++c) {
    const std::size_t v = joint.cell_values(c)[feature];
    for (std::size_t y = 0; y < m; ++y) pxy[v * m + y] += joint.probability(c, y);
  }
  std::vector<double> px(k, 0.0), py(m, 0.0);
  for (std::size_t v = 0; v < k; ++v) {
    for (std::size_t y = 0; y < m; ++y) {
      px[v] += pxy[v * m + y];
      py[y] += pxy[v * m + y];
    }
  }
  double mi = 0.0;
  for (std::size_t v = 0; v < k; ++v) {
    for (std::size_t y = 0; y < m; ++y) mi += xlog2x_ratio(pxy[v * m + y], px[v] * py[y]);
  }
  return mi;
}

// ---- sampling ------------------------------------------------------------------

Sample sample(const DiscreteJoint& joint, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("sample: n must be at least 1");
  Rng rng(seed, kSampleStream);
  std::vector<double> marginal(joint.cell_count());
  for (std::size_t c = 0; c < marginal.size(); ++c) marginal[c] = joint.marginal(c);
  std::vector<std::vector<double>> rows(joint.cell_count(), std::vector<double>(joint.outcome_count()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    for (std::size_t y = 0; y < joint.outcome_count(); ++y) rows[c][y] = joint.conditional(c, y);
  }
  Sample s;
  s.values.reserve(n);
  s.outcomes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cell = draw(marginal, rng.uniform());
    s.values.push_back(joint.cell_values(cell));
    s.outcomes.push_back(draw(rows[cell], rng.uniform()));
  }
  return s;
}

double plug_in_mutual_information(const DiscreteJoint& joint, const Sample& s) {
  const std::size_t cells = joint.cell_count();
  const std::size_t m = joint.outcome_count();
  std::vector<double> counts(cells * m, 0.0), cx(cells, 0.0), cy(m, 0.0);
  for (std::size_t i = 0; i < s.outcomes.size(); ++i) {
    const std::size_t c = joint.cell_index(s.values[i]);
    counts[c * m + s.outcomes[i]] += 1.0;
    cx[c] += 1.0;
    cy[s.outcomes[i]] += 1.0;
  }
  const double n = static_cast<double>(s.outcomes.size());
  double mi = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t y = 0; y < m; ++y) {
      mi += xlog2x_ratio(counts[c * m + y] / n, (cx[c] / n) * (cy[y] / n));
    }
  }
  return mi;
}

std::string to_csv(const DiscreteJoint& joint, const Sample& s) {
  std::ostringstream out;
  std::vector<std::string> row;
  for (const auto& f : joint.features()) row.push_back(f.name);
  row.push_back(joint.outcome_name());
  csv::write_row(out, row);
  for (std::size_t i = 0; i < s.outcomes.size(); ++i) {
    row.clear();
    for (std::size_t f = 0; f < joint.features().size(); ++f) {
      row.push_back(joint.features()[f].values[s.values[i][f]]);
    }
    row.push_back(joint.outcome_values()[s.outcomes[i]]);
    csv::write_row(out, row);
  }
  return out.str();
}

Schema schema_for(const DiscreteJoint& joint) {
  Schema schema;
  schema.task = joint.outcome_count() == 2 ? TaskKind::binary : TaskKind::classification;
  // Values such as "NA" or "?" are legitimate labels here.
  schema.missing_tokens = {""};
  for (const auto& f : joint.features()) {
    ColumnSchema c;
    c.name = f.name;
    c.display_name = f.name;
    c.kind = FeatureKind::categorical;
    c.values = f.values;
    schema.columns.push_back(std::move(c));
  }
  ColumnSchema target;
  target.name = joint.outcome_name();
  target.display_name = joint.outcome_name();
  target.role = ColumnSchema::Role::target;
  target.kind = FeatureKind::categorical;
  target.values = joint.outcome_values();
  schema.columns.push_back(std::move(target));
  return schema;
}

LoadedDataset to_dataset(const DiscreteJoint& joint, const Sample& s, std::array<double, 3> split,
                         std::uint64_t split_seed) {
  Schema schema = schema_for(joint);
  schema.split = split;
  schema.seed = split_seed;
  return load_csv_text(to_csv(joint, s), schema);
}

json ground_truth(const DiscreteJoint& joint) {
  constexpr double kLn2 = 0.69314718055994530942;
  const double hy = outcome_entropy(joint);
  const double hyx = conditional_entropy(joint);
  json per_feature = json::array();
  for (std::size_t i = 0; i < joint.features().size(); ++i) {
    per_feature.push_back({{"name", joint.features()[i].name}, {"mi_bits", standalone_feature_mi(joint, i)}});
  }
  return {{"h_y_bits", hy},
          {"h_y_given_x_bits", hyx},
          {"mi_bits", mutual_information(joint)},
          {"h_x_bits", feature_entropy(joint)},
          {"h_y_nats", hy * kLn2},
          {"h_y_given_x_nats", hyx * kLn2},
          {"features", per_feature},
          {"joint", joint.to_json()}};
}

DiscreteJoint acceptance_joint() {
  const double p_y1[4] = {0.9, 0.7, 0.3, 0.1};
  std::vector<std::vector<double>> conditional;
  for (double p : p_y1) conditional.push_back({1.0 - p, p});
  return DiscreteJoint({{"A", {"0", "1"}}, {"B", {"0", "1"}}}, "y", {"0", "1"}, {}, std::move(conditional));
}

}  // namespace dib::synthetic
