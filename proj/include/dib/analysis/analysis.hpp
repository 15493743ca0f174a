#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dib/data/dataset.hpp"
#include "dib/model/dib_model.hpp"
#include "dib/training/trainer.hpp"

namespace dib {

inline constexpr std::size_t kMaxConfusionValues = 1000;
inline constexpr double kDefaultImportanceThreshold = 0.05;

struct ConfusionMatrix {
  std::string feature;
  std::vector<std::string> labels;
  std::vector<double> coefficients;  // row-major, labels.size() squared

  // Context of the source checkpoint.
  std::string checkpoint;
  std::size_t step = 0;
  double beta = 0.0;
  double kl_total_bits = 0.0;

  std::size_t size() const noexcept { return labels.size(); }
  double at(std::size_t a, std::size_t b) const { return coefficients.at(a * labels.size() + b); }
  // Mean of the off-diagonal entries; 1 when there is a single label.
  double mean_off_diagonal() const;
};

// Bhattacharyya coefficients between the evaluation-mode encodings of each
// row of `encoded` (already-encoded inputs for `channel`). The upper triangle
// is computed and mirrored, and the diagonal is set from the closed form of a
// Gaussian against itself.
ConfusionMatrix confusion_matrix(const DibModel& model, std::size_t channel, std::vector<std::string> labels,
                                 const Tensor& encoded);

// Categorical feature: the given vocabulary entries, in the given order.
// Throws ConfigError on a value outside the vocabulary.
ConfusionMatrix confusion_matrix(const DibModel& model, const DatasetTable& table, std::size_t feature,
                                 std::span<const std::string> values);
// Continuous feature: raw values, sorted ascending before indexing.
ConfusionMatrix confusion_matrix(const DibModel& model, const DatasetTable& table, std::size_t feature,
                                 std::span<const double> raw_values);
// The full vocabulary for a categorical feature, or up to 1000 values drawn
// from the dataset with `seed` for a continuous one.
ConfusionMatrix confusion_matrix(const DibModel& model, const DatasetTable& table, std::size_t feature,
                                 std::uint64_t seed);

// Up to `count` raw values of a continuous feature drawn without replacement
// from the table rows, sorted ascending.
std::vector<double> sample_feature_values(const DatasetTable& table, std::size_t feature, std::size_t count,
                                          std::uint64_t seed);

// ---- importance ----------------------------------------------------------------

struct ImportanceOptions {
  double threshold_bits = kDefaultImportanceThreshold;
  // Adjacent ranks closer than max(absolute, relative * larger) are flagged.
  double tie_absolute_bits = 0.02;
  double tie_relative = 0.1;
};

struct BudgetSnapshot {
  double budget_bits = 0.0;
  bool available = false;  // false when every point carries more than the budget
  std::size_t step = 0;
  double beta = 0.0;
  double kl_total_bits = 0.0;
  double val_error = 0.0;
  std::vector<double> kl_bits;
  std::vector<std::size_t> ranking;  // feature indices, most KL first
  std::vector<bool> tied_with_next;  // aligned with ranking
};

struct ImportanceReport {
  std::vector<std::string> features;
  ImportanceOptions options;
  std::vector<BudgetSnapshot> snapshots;
  // Last logged step at which the feature's KL is at least the threshold;
  // read from high beta towards low beta this is where it starts contributing.
  std::vector<std::optional<std::size_t>> first_contribution_step;
  // Features that ever cross the threshold, earliest contributor first.
  std::vector<std::size_t> contribution_order;
};

// The point with the largest total KL not exceeding `budget_bits` (ties go to
// the later step).
std::optional<std::size_t> point_for_budget(const Trajectory& trajectory, double budget_bits);

// Budgets must be ascending.
ImportanceReport importance_report(const Trajectory& trajectory, std::span<const double> budgets,
                                   const ImportanceOptions& options = {});

// ---- information plane -----------------------------------------------------------

struct FrontierPoint {
  std::size_t step = 0;
  double kl_total_bits = 0.0;
  double val_error = 0.0;
};

// Points sorted by total KL; a point is kept when its validation error is
// strictly below every point with less total KL. Error is non-increasing
// along the result.
std::vector<FrontierPoint> pareto_frontier(const Trajectory& trajectory);

struct InfoPlaneExport {
  std::vector<std::string> features;
  std::vector<BudgetSnapshot> budgets;
  std::vector<FrontierPoint> frontier;
};

InfoPlaneExport info_plane_export(const Trajectory& trajectory, std::span<const double> budgets);

// ---- exports -------------------------------------------------------------------------

nlohmann::json to_json(const ConfusionMatrix& m);
nlohmann::json to_json(const ImportanceReport& r);
nlohmann::json to_json(const InfoPlaneExport& e);

// Label header row and column around the coefficient grid.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& m);
// One row per (budget, rank).
void write_importance_csv(const std::filesystem::path& path, const ImportanceReport& r);
void write_budgets_csv(const std::filesystem::path& path, const InfoPlaneExport& e);
void write_frontier_csv(const std::filesystem::path& path, const InfoPlaneExport& e);

// Worker count for analysis: DIB_THREADS when set to a positive integer,
// otherwise the hardware concurrency.
std::size_t analysis_threads();

}  // namespace dib
