#include "dib/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>

#include "dib/core/gaussian.hpp"
#include "dib/core/rng.hpp"
#include "dib/errors.hpp"
#include "dib/io/csv.hpp"

namespace dib {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kValueSampleStream = 0xc0f5;

// Runs fn(i) for i in [0, n) over a few threads, interleaved so the shrinking
// rows of a triangle are spread evenly.
template <typename Fn>
void parallel_rows(std::size_t n, Fn fn) {
  const std::size_t workers = std::min(analysis_threads(), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

void check_channel(const DibModel& model, std::size_t feature) {
  if (model.config().fused) throw ContractError("confusion matrices need one encoder per feature");
  if (feature >= model.channel_count()) throw ContractError("feature index out of range");
}

std::vector<std::string> feature_names_of(const Trajectory& t) { return t.channel_names; }

BudgetSnapshot snapshot_at(const Trajectory& t, double budget, const ImportanceOptions& options) {
  BudgetSnapshot s;
  s.budget_bits = budget;
  const auto index = point_for_budget(t, budget);
  if (!index) return s;
  const InfoPlanePoint& p = t.points[*index];
  s.available = true;
  s.step = p.step;
  s.beta = p.beta;
  s.kl_total_bits = p.kl_total_bits;
  s.val_error = p.val_error;
  s.kl_bits = p.kl_bits;
  s.ranking.resize(p.kl_bits.size());
  std::iota(s.ranking.begin(), s.ranking.end(), 0);
  std::stable_sort(s.ranking.begin(), s.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return p.kl_bits[a] > p.kl_bits[b]; });
  s.tied_with_next.assign(s.ranking.size(), false);
  for (std::size_t r = 0; r + 1 < s.ranking.size(); ++r) {
    const double hi = p.kl_bits[s.ranking[r]];
    const double lo = p.kl_bits[s.ranking[r + 1]];
    s.tied_with_next[r] = hi - lo <= std::max(options.tie_absolute_bits, options.tie_relative * hi);
  }
  return s;
}

void check_budgets(std::span<const double> budgets) {
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (!std::isfinite(budgets[i]) || budgets[i] < 0.0) throw ConfigError("budgets must be non-negative numbers");
    if (i > 0 && !(budgets[i] > budgets[i - 1])) throw ConfigError("budgets must be strictly ascending");
  }
}

json snapshot_json(const BudgetSnapshot& s, const std::vector<std::string>& features) {
  json j{{"budget_bits", s.budget_bits}, {"available", s.available}};
  if (!s.available) return j;
  j["step"] = s.step;
  j["beta"] = s.beta;
  j["kl_total_bits"] = s.kl_total_bits;
  j["val_error"] = s.val_error;
  json alloc = json::object();
  for (std::size_t f = 0; f < features.size(); ++f) alloc[features[f]] = s.kl_bits[f];
  j["kl_bits"] = alloc;
  json ranking = json::array();
  for (std::size_t r = 0; r < s.ranking.size(); ++r) {
    ranking.push_back({{"feature", features[s.ranking[r]]},
                       {"kl_bits", s.kl_bits[s.ranking[r]]},
                       {"near_tie_with_next", static_cast<bool>(s.tied_with_next[r])}});
  }
  j["ranking"] = ranking;
  return j;
}

}  // namespace

std::size_t analysis_threads() {
  if (const char* env = std::getenv("DIB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---- confusion matrices --------------------------------------------------------

double ConfusionMatrix::mean_off_diagonal() const {
  const std::size_t n = size();
  if (n < 2) return 1.0;
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b) total += at(a, b);
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

ConfusionMatrix confusion_matrix(const DibModel& model, std::size_t channel, std::vector<std::string> labels,
                                 const Tensor& encoded) {
  check_channel(model, channel);
  if (encoded.rank() != 2 || encoded.rows() != labels.size()) {
    throw DimensionError("confusion_matrix: need one encoded row per label");
  }
  if (labels.size() > kMaxConfusionValues) {
    throw ContractError("confusion_matrix: at most " + std::to_string(kMaxConfusionValues) + " values");
  }
  const std::vector<DiagonalGaussian> g = model.encode_feature(channel, encoded);
  const std::size_t n = labels.size();
  ConfusionMatrix m;
  m.feature = model.config().feature_names[channel];
  m.labels = std::move(labels);
  m.coefficients.assign(n * n, 0.0);
  parallel_rows(n, [&](std::size_t a) {
    m.coefficients[a * n + a] = bhattacharyya_coefficient(g[a], g[a]);
    for (std::size_t b = a + 1; b < n; ++b) m.coefficients[a * n + b] = bhattacharyya_coefficient(g[a], g[b]);
  });
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < a; ++b) m.coefficients[a * n + b] = m.coefficients[b * n + a];
  }
  return m;
}

ConfusionMatrix confusion_matrix(const DibModel& model, const DatasetTable& table, std::size_t feature,
                                 std::span<const std::string> values) {
  check_channel(model, feature);
  const FeatureSpec& spec = table.features.at(feature);
  if (spec.kind != FeatureKind::categorical) {
    throw ContractError("feature '" + spec.display_name + "' is continuous; pass numeric values");
  }
  const std::size_t w = spec.encoded_width();
  Tensor encoded({values.size(), w});
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto code = spec.code_of(values[i]);
    if (!code) throw ConfigError("value '" + values[i] + "' is not in the vocabulary of '" + spec.display_name + "'");
    encode_stored(spec, static_cast<double>(*code), std::span<double>(encoded.data() + i * w, w));
  }
  return confusion_matrix(model, feature, std::vector<std::string>(values.begin(), values.end()), encoded);
}

ConfusionMatrix confusion_matrix(const DibModel& model, const DatasetTable& table, std::size_t feature,
                                 std::span<const double> raw_values) {
  check_channel(model, feature);
  const FeatureSpec& spec = table.features.at(feature);
  if (spec.kind != FeatureKind::continuous) {
    throw ContractError("feature '" + spec.display_name + "' is categorical; pass vocabulary values");
  }
  std::vector<double> sorted(raw_values.begin(), raw_values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t w = spec.encoded_width();
  Tensor encoded({sorted.size(), w});
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!std::isfinite(sorted[i])) throw ConfigError("confusion values must be finite");
    encode_stored(spec, sorted[i], std::span<double>(encoded.data() + i * w, w));
    labels.push_back(csv::format_double(sorted[i]));
  }
  return confusion_matrix(model, feature, std::move(labels), encoded);
}

ConfusionMatrix confusion_matrix(const DibModel& model, const DatasetTable& table, std::size_t feature,
                                 std::uint64_t seed) {
  const FeatureSpec& spec = table.features.at(feature);
  if (spec.kind == FeatureKind::categorical) {
    std::vector<std::string> values = spec.vocabulary;
    if (values.size() > kMaxConfusionValues) values.resize(kMaxConfusionValues);
    return confusion_matrix(model, table, feature, std::span<const std::string>(values));
  }
  const std::vector<double> values = sample_feature_values(table, feature, kMaxConfusionValues, seed);
  return confusion_matrix(model, table, feature, std::span<const double>(values));
}

std::vector<double> sample_feature_values(const DatasetTable& table, std::size_t feature, std::size_t count,
                                          std::uint64_t seed) {
  const std::vector<double>& column = table.columns.at(feature);
  std::vector<std::size_t> rows(column.size());
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(seed, kValueSampleStream);
  const std::size_t take = std::min(count, rows.size());
  // Partial Fisher-Yates: the first `take` slots are a uniform sample.
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(rows[i], rows[i + rng.below(rows.size() - i)]);
  }
  std::vector<double> values;
  values.reserve(take);
  for (std::size_t i = 0; i < take; ++i) values.push_back(column[rows[i]]);
  std::sort(values.begin(), values.end());
  return values;
}

// ---- importance ----------------------------------------------------------------

std::optional<std::size_t> point_for_budget(const Trajectory& trajectory, double budget_bits) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trajectory.points.size(); ++i) {
    const double kl = trajectory.points[i].kl_total_bits;
    if (kl > budget_bits) continue;
    if (!best || kl >= trajectory.points[*best].kl_total_bits) best = i;
  }
  return best;
}

ImportanceReport importance_report(const Trajectory& trajectory, std::span<const double> budgets,
                                   const ImportanceOptions& options) {
  if (trajectory.points.empty()) throw ContractError("importance_report: empty trajectory");
  check_budgets(budgets);
  if (!(options.threshold_bits >= 0.0)) throw ConfigError("importance threshold must be non-negative");
  ImportanceReport r;
  r.features = feature_names_of(trajectory);
  r.options = options;
  for (double b : budgets) r.snapshots.push_back(snapshot_at(trajectory, b, options));

  const std::size_t nf = r.features.size();
  r.first_contribution_step.assign(nf, std::nullopt);
  std::vector<double> kl_at_crossing(nf, 0.0);
  for (auto it = trajectory.points.rbegin(); it != trajectory.points.rend(); ++it) {
    for (std::size_t f = 0; f < nf; ++f) {
      if (!r.first_contribution_step[f] && it->kl_bits[f] >= options.threshold_bits) {
        r.first_contribution_step[f] = it->step;
        kl_at_crossing[f] = it->kl_bits[f];
      }
    }
  }
  for (std::size_t f = 0; f < nf; ++f) {
    if (r.first_contribution_step[f]) r.contribution_order.push_back(f);
  }
  std::stable_sort(r.contribution_order.begin(), r.contribution_order.end(), [&](std::size_t a, std::size_t b) {
    if (*r.first_contribution_step[a] != *r.first_contribution_step[b]) {
      return *r.first_contribution_step[a] > *r.first_contribution_step[b];
    }
    return kl_at_crossing[a] > kl_at_crossing[b];
  });
  return r;
}

// ---- information plane -----------------------------------------------------------

std::vector<FrontierPoint> pareto_frontier(const Trajectory& trajectory) {
  std::vector<std::size_t> order(trajectory.points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return trajectory.points[a].kl_total_bits < trajectory.points[b].kl_total_bits;
  });
  std::vector<FrontierPoint> out;
  for (std::size_t i : order) {
    const InfoPlanePoint& p = trajectory.points[i];
    if (std::isnan(p.val_error)) continue;
    if (out.empty() || p.val_error < out.back().val_error) out.push_back({p.step, p.kl_total_bits, p.val_error});
  }
  return out;
}

InfoPlaneExport info_plane_export(const Trajectory& trajectory, std::span<const double> budgets) {
  check_budgets(budgets);
  InfoPlaneExport e;
  e.features = feature_names_of(trajectory);
  for (double b : budgets) e.budgets.push_back(snapshot_at(trajectory, b, {}));
  e.frontier = pareto_frontier(trajectory);
  return e;
}

// ---- exports -------------------------------------------------------------------------

json to_json(const ConfusionMatrix& m) {
  const std::size_t n = m.size();
  json rows = json::array();
  for (std::size_t a = 0; a < n; ++a) {
    rows.push_back(std::vector<double>(m.coefficients.begin() + static_cast<std::ptrdiff_t>(a * n),
                                       m.coefficients.begin() + static_cast<std::ptrdiff_t>((a + 1) * n)));
  }
  return {{"feature", m.feature},     {"labels", m.labels},   {"matrix", rows},
          {"checkpoint", m.checkpoint}, {"step", m.step},     {"beta", m.beta},
          {"kl_total_bits", m.kl_total_bits}};
}

json to_json(const ImportanceReport& r) {
  json snapshots = json::array();
  for (const auto& s : r.snapshots) snapshots.push_back(snapshot_json(s, r.features));
  json first = json::object();
  for (std::size_t f = 0; f < r.features.size(); ++f) {
    first[r.features[f]] = r.first_contribution_step[f] ? json(*r.first_contribution_step[f]) : json(nullptr);
  }
  json order = json::array();
  for (std::size_t f : r.contribution_order) order.push_back(r.features[f]);
  return {{"features", r.features},
          {"threshold_bits", r.options.threshold_bits},
          {"tie_absolute_bits", r.options.tie_absolute_bits},
          {"tie_relative", r.options.tie_relative},
          {"budgets", snapshots},
          {"first_contribution_step", first},
          {"contribution_order", order}};
}

json to_json(const InfoPlaneExport& e) {
  json budgets = json::array();
  for (const auto& s : e.budgets) budgets.push_back(snapshot_json(s, e.features));
  json frontier = json::array();
  for (const auto& p : e.frontier) {
    frontier.push_back({{"step", p.step}, {"kl_total_bits", p.kl_total_bits}, {"val_error", p.val_error}});
  }
  return {{"features", e.features}, {"budgets", budgets}, {"frontier", frontier}};
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& m) {
  auto out = open_output(path);
  std::vector<std::string> row{m.feature};
  row.insert(row.end(), m.labels.begin(), m.labels.end());
  csv::write_row(out, row);
  for (std::size_t a = 0; a < m.size(); ++a) {
    row.assign(1, m.labels[a]);
    for (std::size_t b = 0; b < m.size(); ++b) row.push_back(csv::format_double(m.at(a, b)));
    csv::write_row(out, row);
  }
}

void write_importance_csv(const std::filesystem::path& path, const ImportanceReport& r) {
  auto out = open_output(path);
  const std::vector<std::string> header{"budget_bits", "step",  "beta",    "kl_total_bits",
                                        "rank",        "feature", "kl_bits", "near_tie_with_next",
                                        "first_contribution_step"};
  csv::write_row(out, header);
  for (const auto& s : r.snapshots) {
    if (!s.available) {
      csv::write_row(out, std::vector<std::string>{csv::format_double(s.budget_bits), "", "", "", "", "", "", "", ""});
      continue;
    }
    for (std::size_t k = 0; k < s.ranking.size(); ++k) {
      const std::size_t f = s.ranking[k];
      const auto& first = r.first_contribution_step[f];
      csv::write_row(out, std::vector<std::string>{
                              csv::format_double(s.budget_bits), std::to_string(s.step), csv::format_double(s.beta),
                              csv::format_double(s.kl_total_bits), std::to_string(k + 1), r.features[f],
                              csv::format_double(s.kl_bits[f]), s.tied_with_next[k] ? "1" : "0",
                              first ? std::to_string(*first) : ""});
    }
  }
}

void write_budgets_csv(const std::filesystem::path& path, const InfoPlaneExport& e) {
  auto out = open_output(path);
  std::vector<std::string> header{"budget_bits", "available", "step", "beta", "kl_total_bits", "val_error"};
  for (const auto& f : e.features) header.push_back("kl_" + f + "_bits");
  csv::write_row(out, header);
  for (const auto& s : e.budgets) {
    std::vector<std::string> row{csv::format_double(s.budget_bits), s.available ? "1" : "0"};
    if (s.available) {
      row.push_back(std::to_string(s.step));
      row.push_back(csv::format_double(s.beta));
      row.push_back(csv::format_double(s.kl_total_bits));
      row.push_back(csv::format_double(s.val_error));
      for (double v : s.kl_bits) row.push_back(csv::format_double(v));
    } else {
      row.resize(header.size());
    }
    csv::write_row(out, row);
  }
}

void write_frontier_csv(const std::filesystem::path& path, const InfoPlaneExport& e) {
  auto out = open_output(path);
  csv::write_row(out, std::vector<std::string>{"step", "kl_total_bits", "val_error"});
  for (const auto& p : e.frontier) {
    csv::write_row(out, std::vector<std::string>{std::to_string(p.step), csv::format_double(p.kl_total_bits),
                                                 csv::format_double(p.val_error)});
  }
}

}  // namespace dib
