#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dib/data/dataset.hpp"
#include "dib/model/dib_model.hpp"

namespace dib {

inline constexpr double kLn2 = 0.69314718055994530942;
inline double nats_to_bits(double nats) { return nats / kLn2; }

struct TrainConfig {
  std::size_t batch_size = 128;
  double learning_rate = 3e-4;
  double beta_initial = 2e-5;
  double beta_final = 2.0;
  std::size_t annealing_steps = 50000;
  // Constant-beta steps before the ramp; 10% of annealing_steps when unset.
  std::optional<std::size_t> warmup_steps;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 250;
  std::size_t checkpoint_every = 5000;
  // 0: evaluate on posterior means; S > 0: average predictions over S samples.
  std::size_t eval_samples = 0;
  ModelConfig model;

  std::size_t warmup() const noexcept {
    return warmup_steps ? *warmup_steps : annealing_steps / 10;
  }
  std::size_t total_steps() const noexcept { return warmup() + annealing_steps; }

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; errors name the offending key.
  static TrainConfig from_json(const nlohmann::json& doc);
};

// beta_initial during warmup, then geometric interpolation to beta_final over
// annealing_steps, constant afterwards.
double beta_schedule(std::size_t step, const TrainConfig& config);

struct InfoPlanePoint {
  std::size_t step = 0;
  double beta = 0.0;
  std::vector<double> kl_bits;  // per channel, mean over the validation split
  double kl_total_bits = 0.0;
  double train_error = 0.0;
  double val_error = 0.0;
  std::vector<double> metrics;  // aligned with Trajectory::metric_names
  std::string checkpoint;       // file name inside the checkpoint directory, or empty
};

struct Trajectory {
  std::vector<std::string> channel_names;
  std::vector<std::string> metric_names;
  std::vector<InfoPlanePoint> points;
  nlohmann::json config;

  std::vector<std::string> checkpoints() const;
};

struct EvalOptions {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::size_t batch_rows = 2048;
};

struct MetricSet {
  TaskKind task = TaskKind::classification;
  std::size_t count = 0;
  double cross_entropy = 0.0;   // classification, nats
  double accuracy = 0.0;        // classification
  std::optional<double> auc;    // binary; empty when only one class is present
  double rmse = 0.0;            // regression, original target scale
  std::vector<double> kl_nats;  // per channel, mean over rows

  // The optimized error: cross entropy (nats) or RMSE.
  double error() const noexcept { return task == TaskKind::regression ? rmse : cross_entropy; }
};

MetricSet evaluate(const DibModel& model, const DatasetTable& table, std::span<const std::size_t> indices,
                   const EvalOptions& options = {});

// Trapezoidal ROC AUC with tied scores averaged (Mann-Whitney U). Empty when
// the labels contain a single class or a score is NaN.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels);

struct TrainHooks {
  // Called after every logged point, in step order.
  std::function<void(const InfoPlanePoint&)> on_point;
  // Checkpoints are written here when non-empty.
  std::filesystem::path checkpoint_dir;
  // Merged into every checkpoint's metadata.
  nlohmann::json checkpoint_metadata = nlohmann::json::object();
};

// Annealed minibatch Adam on the distributed loss. Logs a point every
// eval_every steps and at the last step; checkpoints every checkpoint_every
// steps and at the last step. Throws TrainingError on a non-finite loss.
Trajectory train(const TrainConfig& config, const DatasetTable& table, const SplitIndices& splits,
                 DibModel& model, const TrainHooks& hooks = {});

std::string checkpoint_file_name(std::size_t step);

// Column layout of the trajectory a model and task produce.
std::vector<std::string> trajectory_channel_names(const DibModel& model);
std::vector<std::string> trajectory_metric_names(TaskKind task);

// Trajectory CSV: step, beta, kl_total_bits, kl_<channel>_bits..., train_error,
// val_error, metric columns, checkpoint.
void write_trajectory_header(std::ostream& out, const Trajectory& trajectory);
void write_trajectory_row(std::ostream& out, const InfoPlanePoint& point);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

}  // namespace dib
