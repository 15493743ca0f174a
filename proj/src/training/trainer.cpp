#include "dib/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "dib/core/adam.hpp"
#include "dib/errors.hpp"
#include "dib/io/checkpoint.hpp"
#include "dib/io/csv.hpp"

namespace dib {

namespace {

constexpr std::uint64_t kBatchStream = 0xba7c4;
constexpr std::uint64_t kNoiseStream = 0x9e15e;

using json = nlohmann::json;

template <typename T>
T read_key(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config.") + key + ": wrong type (" + doc.at(key).dump() + ")");
  }
}

std::size_t read_count(const json& doc, const char* key, std::size_t fallback) {
  if (!doc.contains(key)) return fallback;
  const json& v = doc.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("config.") + key + ": expected a non-negative integer, got " + v.dump());
  }
  return v.get<std::size_t>();
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "batch_size",      "learning_rate", "beta_initial",   "beta_final",     "annealing_steps",
      "warmup_steps",    "dropout",       "seed",           "eval_every",     "checkpoint_every",
      "eval_samples",    "embedding_dim", "encoder_hidden", "decoder_hidden", "leaky_relu_alpha",
      "fused"};
  return keys;
}

double log_mean_exp(std::span<const double> xs) {
  const double top = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - top);
  return top + std::log(acc / static_cast<double>(xs.size()));
}

void log_softmax_row(const double* logits, std::size_t k, double* out) {
  const double top = *std::max_element(logits, logits + k);
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) acc += std::exp(logits[j] - top);
  const double lse = top + std::log(acc);
  for (std::size_t j = 0; j < k; ++j) out[j] = logits[j] - lse;
}

std::vector<double> metric_values(TaskKind task, const MetricSet& val, const MetricSet& test) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  switch (task) {
    case TaskKind::regression:
      return {test.error()};
    case TaskKind::binary:
      return {val.accuracy, val.auc.value_or(nan), test.error(), test.accuracy, test.auc.value_or(nan)};
    case TaskKind::classification:
      break;
  }
  return {val.accuracy, test.error(), test.accuracy};
}

void check_model_matches(const DibModel& model, const DatasetTable& table) {
  const ModelConfig& mc = model.config();
  if (mc.input_widths.size() != table.features.size()) {
    throw ConfigError("model has " + std::to_string(mc.input_widths.size()) + " feature inputs, dataset has " +
                      std::to_string(table.features.size()));
  }
  for (std::size_t f = 0; f < table.features.size(); ++f) {
    if (mc.input_widths[f] != table.features[f].encoded_width()) {
      throw ConfigError("model input width for feature '" + table.features[f].display_name +
                        "' does not match the dataset encoding");
    }
  }
  if (mc.task != table.task() || mc.output_width != table.target.output_width()) {
    throw ConfigError("model head does not match the dataset target");
  }
}

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> rows) {
  const std::size_t w = source.cols();
  Tensor out({rows.size(), w});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(source.data() + rows[r] * w, w, out.data() + r * w);
  }
  return out;
}

}  // namespace

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("config.batch_size: must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("config.learning_rate: must be a positive finite number");
  }
  if (!(beta_initial > 0.0) || !std::isfinite(beta_initial)) {
    throw ConfigError("config.beta_initial: must be a positive finite number");
  }
  if (!(beta_final > 0.0) || !std::isfinite(beta_final)) {
    throw ConfigError("config.beta_final: must be a positive finite number");
  }
  if (annealing_steps == 0) throw ConfigError("config.annealing_steps: must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("config.dropout: must be in [0, 1)");
  if (eval_every == 0) throw ConfigError("config.eval_every: must be positive");
  if (checkpoint_every == 0) throw ConfigError("config.checkpoint_every: must be positive");
  if (model.embedding_dim == 0) throw ConfigError("config.embedding_dim: must be positive");
  if (!(model.leaky_alpha >= 0.0)) throw ConfigError("config.leaky_relu_alpha: must be non-negative");
  for (std::size_t h : model.encoder_hidden) {
    if (h == 0) throw ConfigError("config.encoder_hidden: layer widths must be positive");
  }
  for (std::size_t h : model.decoder_hidden) {
    if (h == 0) throw ConfigError("config.decoder_hidden: layer widths must be positive");
  }
}

json TrainConfig::to_json() const {
  json doc{{"batch_size", batch_size},
           {"learning_rate", learning_rate},
           {"beta_initial", beta_initial},
           {"beta_final", beta_final},
           {"annealing_steps", annealing_steps},
           {"warmup_steps", warmup()},
           {"dropout", dropout_rate},
           {"seed", seed},
           {"eval_every", eval_every},
           {"checkpoint_every", checkpoint_every},
           {"eval_samples", eval_samples},
           {"embedding_dim", model.embedding_dim},
           {"encoder_hidden", model.encoder_hidden},
           {"decoder_hidden", model.decoder_hidden},
           {"leaky_relu_alpha", model.leaky_alpha},
           {"fused", model.fused}};
  return doc;
}

TrainConfig TrainConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& item : doc.items()) {
    if (!known_keys().contains(item.key())) throw ConfigError("config." + item.key() + ": unknown key");
  }
  TrainConfig c;
  c.batch_size = read_count(doc, "batch_size", c.batch_size);
  c.learning_rate = read_key<double>(doc, "learning_rate", c.learning_rate);
  c.beta_initial = read_key<double>(doc, "beta_initial", c.beta_initial);
  c.beta_final = read_key<double>(doc, "beta_final", c.beta_final);
  c.annealing_steps = read_count(doc, "annealing_steps", c.annealing_steps);
  if (doc.contains("warmup_steps")) c.warmup_steps = read_count(doc, "warmup_steps", 0);
  c.dropout_rate = read_key<double>(doc, "dropout", c.dropout_rate);
  c.seed = read_count(doc, "seed", 0);
  c.eval_every = read_count(doc, "eval_every", c.eval_every);
  c.checkpoint_every = read_count(doc, "checkpoint_every", c.checkpoint_every);
  c.eval_samples = read_count(doc, "eval_samples", c.eval_samples);
  c.model.embedding_dim = read_count(doc, "embedding_dim", c.model.embedding_dim);
  c.model.encoder_hidden = read_key<std::vector<std::size_t>>(doc, "encoder_hidden", c.model.encoder_hidden);
  c.model.decoder_hidden = read_key<std::vector<std::size_t>>(doc, "decoder_hidden", c.model.decoder_hidden);
  c.model.leaky_alpha = read_key<double>(doc, "leaky_relu_alpha", c.model.leaky_alpha);
  c.model.fused = read_key<bool>(doc, "fused", c.model.fused);
  c.validate();
  return c;
}

double beta_schedule(std::size_t step, const TrainConfig& config) {
  const std::size_t warmup = config.warmup();
  if (step < warmup) return config.beta_initial;
  const double t = static_cast<double>(step - warmup) / static_cast<double>(config.annealing_steps);
  if (t >= 1.0) return config.beta_final;
  return config.beta_initial * std::pow(config.beta_final / config.beta_initial, t);
}

std::vector<std::string> Trajectory::checkpoints() const {
  std::vector<std::string> out;
  for (const auto& p : points) {
    if (!p.checkpoint.empty()) out.push_back(p.checkpoint);
  }
  return out;
}

std::vector<std::string> trajectory_channel_names(const DibModel& model) {
  if (model.config().fused) return {"fused"};
  return model.config().feature_names;
}

std::vector<std::string> trajectory_metric_names(TaskKind task) {
  switch (task) {
    case TaskKind::regression:
      return {"test_error"};
    case TaskKind::binary:
      return {"val_accuracy", "val_auc", "test_error", "test_accuracy", "test_auc"};
    case TaskKind::classification:
      break;
  }
  return {"val_accuracy", "test_error", "test_accuracy"};
}

std::string checkpoint_file_name(std::size_t step) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "step_%09zu.ckpt", step);
  return buf;
}

// ---- evaluation --------------------------------------------------------------

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: scores and labels differ in length");
  if (std::any_of(scores.begin(), scores.end(), [](double s) { return std::isnan(s); })) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double np = static_cast<double>(positives);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

MetricSet evaluate(const DibModel& model, const DatasetTable& table, std::span<const std::size_t> indices,
                   const EvalOptions& options) {
  if (indices.empty()) throw ContractError("evaluate: no rows given");
  check_model_matches(model, table);
  const TaskKind task = table.task();
  const std::size_t channels = model.channel_count();
  const std::size_t k = model.config().output_width;
  const std::size_t chunk = std::max<std::size_t>(options.batch_rows, 1);

  MetricSet m;
  m.task = task;
  m.count = indices.size();
  m.kl_nats.assign(channels, 0.0);

  Rng rng(options.seed, kNoiseStream + 1);
  double ce_sum = 0.0, sq_sum = 0.0;
  std::size_t correct = 0;
  std::vector<double> scores;
  std::vector<int> labels;

  for (std::size_t begin = 0; begin < indices.size(); begin += chunk) {
    const auto rows = indices.subspan(begin, std::min(chunk, indices.size() - begin));
    std::vector<Tensor> inputs;
    for (std::size_t f = 0; f < table.features.size(); ++f) inputs.push_back(encode_column(table, f, rows));

    // Per-row log-probabilities (classification) or predictions (regression),
    // averaged over posterior samples when requested.
    const std::size_t passes = options.samples == 0 ? 1 : options.samples;
    std::vector<std::vector<double>> per_pass(passes);
    for (std::size_t s = 0; s < passes; ++s) {
      Tape tape(false);
      const ForwardOptions fo{options.samples > 0, 0.0};
      const ForwardResult out = model.forward(tape, inputs, fo, options.samples > 0 ? &rng : nullptr);
      if (s == 0) {
        for (std::size_t c = 0; c < channels; ++c) {
          for (double v : out.kl[c].value().values()) m.kl_nats[c] += v;
        }
      }
      const Tensor& pred = out.prediction.value();
      auto& dst = per_pass[s];
      dst.resize(pred.size());
      if (task == TaskKind::regression) {
        std::copy(pred.values().begin(), pred.values().end(), dst.begin());
      } else {
        for (std::size_t r = 0; r < rows.size(); ++r) log_softmax_row(pred.data() + r * k, k, dst.data() + r * k);
      }
    }

    std::vector<double> tmp(passes);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double y = table.targets[rows[r]];
      if (task == TaskKind::regression) {
        double p = 0.0;
        for (std::size_t s = 0; s < passes; ++s) p += per_pass[s][r];
        p = p / static_cast<double>(passes) * table.target.std + table.target.mean;
        sq_sum += (p - y) * (p - y);
        continue;
      }
      std::vector<double> logp(k);
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t s = 0; s < passes; ++s) tmp[s] = per_pass[s][r * k + j];
        logp[j] = passes == 1 ? tmp[0] : log_mean_exp(tmp);
      }
      const auto cls = static_cast<std::size_t>(y);
      ce_sum -= logp[cls];
      const auto best = static_cast<std::size_t>(std::max_element(logp.begin(), logp.end()) - logp.begin());
      if (best == cls) ++correct;
      if (task == TaskKind::binary) {
        scores.push_back(logp[1]);
        labels.push_back(static_cast<int>(cls));
      }
    }
  }

  const double n = static_cast<double>(indices.size());
  for (double& v : m.kl_nats) v /= n;
  if (task == TaskKind::regression) {
    m.rmse = std::sqrt(sq_sum / n);
  } else {
    m.cross_entropy = ce_sum / n;
    m.accuracy = static_cast<double>(correct) / n;
    if (task == TaskKind::binary) m.auc = roc_auc(scores, labels);
  }
  return m;
}

// ---- training ----------------------------------------------------------------

Trajectory train(const TrainConfig& config, const DatasetTable& table, const SplitIndices& splits,
                 DibModel& model, const TrainHooks& hooks) {
  config.validate();
  if (splits.train.empty()) throw ConfigError("training split is empty");
  if (splits.validation.empty()) throw ConfigError("validation split is empty");
  check_model_matches(model, table);

  const TaskKind task = table.task();
  std::vector<Tensor> encoded;
  {
    std::vector<std::size_t> all(table.row_count());
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t f = 0; f < table.features.size(); ++f) encoded.push_back(encode_column(table, f, all));
  }

  Trajectory trajectory;
  trajectory.channel_names = trajectory_channel_names(model);
  trajectory.metric_names = trajectory_metric_names(task);
  trajectory.config = config.to_json();

  AdamState adam = AdamState::for_parameters(model.params(), config.learning_rate);
  Rng batch_rng(config.seed, kBatchStream);
  Rng noise_rng(config.seed, kNoiseStream);
  std::vector<std::size_t> order = splits.train;
  std::shuffle(order.begin(), order.end(), batch_rng.engine());
  std::size_t cursor = 0;
  const std::size_t batch = std::min(config.batch_size, order.size());
  const ForwardOptions train_mode{true, config.dropout_rate};
  const EvalOptions eval_options{config.eval_samples, config.seed};

  double error_sum = 0.0;
  std::size_t error_count = 0;
  std::string last_checkpoint;
  const std::size_t total = config.total_steps();

  std::vector<std::size_t> class_targets(batch);
  Tensor regression_targets({batch, 1});

  for (std::size_t step = 1; step <= total; ++step) {
    if (cursor + batch > order.size()) {
      std::shuffle(order.begin(), order.end(), batch_rng.engine());
      cursor = 0;
    }
    const std::span<const std::size_t> rows(order.data() + cursor, batch);
    cursor += batch;

    std::vector<Tensor> inputs;
    inputs.reserve(encoded.size());
    for (const Tensor& column : encoded) inputs.push_back(gather_rows(column, rows));

    const double beta = beta_schedule(step, config);
    Gradients grads;
    {
      Tape tape;
      const ForwardResult out = model.forward(tape, inputs, train_mode, &noise_rng);
      LossTerms loss;
      if (task == TaskKind::regression) {
        for (std::size_t r = 0; r < batch; ++r) {
          regression_targets[r] = (table.targets[rows[r]] - table.target.mean) / table.target.std;
        }
        loss = loss_regression(out.prediction, regression_targets, out.kl, beta);
      } else {
        for (std::size_t r = 0; r < batch; ++r) class_targets[r] = static_cast<std::size_t>(table.targets[rows[r]]);
        loss = loss_classification(out.prediction, class_targets, out.kl, beta);
      }
      const double total_loss = loss.total.value().item();
      if (!std::isfinite(total_loss)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step), step, last_checkpoint);
      }
      error_sum += loss.error.value().item();
      ++error_count;
      grads = tape.backward(loss.total, model.params());
    }
    try {
      adam_step(adam, model.params(), grads);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step), step, last_checkpoint);
    }

    const bool last = step == total;
    if (step % config.eval_every != 0 && !last) continue;

    const MetricSet val = evaluate(model, table, splits.validation, eval_options);
    MetricSet test;
    test.task = task;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    test.cross_entropy = test.accuracy = test.rmse = nan;
    if (!splits.test.empty()) test = evaluate(model, table, splits.test, eval_options);

    InfoPlanePoint point;
    point.step = step;
    point.beta = beta;
    for (double kl : val.kl_nats) {
      point.kl_bits.push_back(nats_to_bits(kl));
      point.kl_total_bits += point.kl_bits.back();
    }
    const double mean_error = error_sum / static_cast<double>(error_count);
    point.train_error = task == TaskKind::regression ? std::sqrt(mean_error) * table.target.std : mean_error;
    point.val_error = val.error();
    point.metrics = metric_values(task, val, test);
    error_sum = 0.0;
    error_count = 0;

    if (!hooks.checkpoint_dir.empty() && (step % config.checkpoint_every == 0 || last)) {
      json metadata = hooks.checkpoint_metadata;
      metadata["step"] = step;
      metadata["beta"] = beta;
      metadata["kl_bits"] = point.kl_bits;
      metadata["kl_total_bits"] = point.kl_total_bits;
      metadata["val_error"] = point.val_error;
      metadata["channels"] = trajectory.channel_names;
      point.checkpoint = checkpoint_file_name(step);
      save_checkpoint(hooks.checkpoint_dir / point.checkpoint, model, metadata);
      last_checkpoint = (hooks.checkpoint_dir / point.checkpoint).string();
    }
    if (hooks.on_point) hooks.on_point(point);
    trajectory.points.push_back(std::move(point));
  }
  return trajectory;
}

// ---- trajectory CSV ----------------------------------------------------------

void write_trajectory_header(std::ostream& out, const Trajectory& trajectory) {
  std::vector<std::string> header{"step", "beta", "kl_total_bits"};
  for (const auto& c : trajectory.channel_names) header.push_back("kl_" + c + "_bits");
  header.push_back("train_error");
  header.push_back("val_error");
  for (const auto& m : trajectory.metric_names) header.push_back(m);
  header.push_back("checkpoint");
  csv::write_row(out, header);
}

void write_trajectory_row(std::ostream& out, const InfoPlanePoint& point) {
  std::vector<std::string> row{std::to_string(point.step), csv::format_double(point.beta),
                               csv::format_double(point.kl_total_bits)};
  for (double v : point.kl_bits) row.push_back(csv::format_double(v));
  row.push_back(csv::format_double(point.train_error));
  row.push_back(csv::format_double(point.val_error));
  for (double v : point.metrics) row.push_back(csv::format_double(v));
  row.push_back(point.checkpoint);
  csv::write_row(out, row);
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_trajectory_header(out, trajectory);
  for (const auto& p : trajectory.points) write_trajectory_row(out, p);
  if (!out) throw ConfigError("failed writing " + path.string());
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  const csv::Document doc = csv::read_file(path);
  const auto& h = doc.header;
  if (h.size() < 6 || h[0] != "step" || h[1] != "beta" || h[2] != "kl_total_bits" || h.back() != "checkpoint") {
    throw IngestionError("not a trajectory file: " + path.string(), 1);
  }
  Trajectory t;
  std::size_t col = 3;
  for (; col < h.size() && h[col] != "train_error"; ++col) {
    const std::string& name = h[col];
    if (name.size() < 8 || !name.starts_with("kl_") || !name.ends_with("_bits")) {
      throw IngestionError("unexpected trajectory column", 1, name);
    }
    t.channel_names.push_back(name.substr(3, name.size() - 8));
  }
  if (col + 1 >= h.size() || h[col + 1] != "val_error") {
    throw IngestionError("trajectory header lacks train_error/val_error", 1);
  }
  const std::size_t metric_begin = col + 2;
  for (std::size_t m = metric_begin; m + 1 < h.size(); ++m) t.metric_names.push_back(h[m]);

  for (const auto& rec : doc.records) {
    if (rec.fields.size() != h.size()) throw IngestionError("wrong number of fields", rec.line);
    auto number = [&](std::size_t i) {
      const std::string& s = rec.fields[i];
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) throw IngestionError("not a number", rec.line, h[i]);
      return v;
    };
    InfoPlanePoint p;
    const double step = number(0);
    if (!(step >= 0.0) || step != std::floor(step)) throw IngestionError("bad step", rec.line, "step");
    p.step = static_cast<std::size_t>(step);
    p.beta = number(1);
    p.kl_total_bits = number(2);
    for (std::size_t c = 0; c < t.channel_names.size(); ++c) p.kl_bits.push_back(number(3 + c));
    p.train_error = number(col);
    p.val_error = number(col + 1);
    for (std::size_t m = metric_begin; m + 1 < h.size(); ++m) p.metrics.push_back(number(m));
    p.checkpoint = rec.fields.back();
    t.points.push_back(std::move(p));
  }
  return t;
}

}  // namespace dib
