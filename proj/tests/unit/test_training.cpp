#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dib/errors.hpp"
#include "dib/io/checkpoint.hpp"
#include "dib/training/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace dib;
using nlohmann::json;

namespace {

std::string trajectory_text(const Trajectory& t) {
  std::ostringstream out;
  write_trajectory_header(out, t);
  for (const auto& p : t.points) write_trajectory_row(out, p);
  return out.str();
}

}  // namespace

TEST_CASE("beta schedule holds during warmup then anneals geometrically") {
  TrainConfig c;
  c.annealing_steps = 1000;
  CHECK(c.warmup() == 100);
  CHECK(c.total_steps() == 1100);
  CHECK(beta_schedule(0, c) == 2e-5);
  CHECK(beta_schedule(99, c) == 2e-5);
  CHECK(beta_schedule(100, c) == 2e-5);
  CHECK(beta_schedule(600, c) == doctest::Approx(std::sqrt(2e-5 * 2.0)).epsilon(1e-12));
  CHECK(beta_schedule(600, c) == doctest::Approx(6.3245553e-3));
  CHECK(beta_schedule(1100, c) == 2.0);
  CHECK(beta_schedule(5000, c) == 2.0);
  double prev = 0.0;
  for (std::size_t s = 0; s <= 1200; ++s) {
    const double b = beta_schedule(s, c);
    CHECK(b >= prev);
    prev = b;
  }
  c.warmup_steps = 0;
  CHECK(beta_schedule(500, c) == doctest::Approx(std::sqrt(2e-5 * 2.0)).epsilon(1e-12));
}

TEST_CASE("training config parses, round-trips and names bad keys") {
  const TrainConfig c = TrainConfig::from_json(json::parse(R"({"batch_size": 32, "beta_final": 1.5, "encoder_hidden": [4]})"));
  CHECK(c.batch_size == 32);
  CHECK(c.beta_final == 1.5);
  CHECK(c.model.encoder_hidden == std::vector<std::size_t>{4});
  CHECK(c.learning_rate == 3e-4);
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());

  auto message = [](const char* text) -> std::string {
    try {
      TrainConfig::from_json(json::parse(text));
    } catch (const ConfigError& e) {
      return e.what();
    }
    return {};
  };
  CHECK(message(R"({"batchsize": 3})").find("config.batchsize") != std::string::npos);
  CHECK(message(R"({"batch_size": -3})").find("config.batch_size") != std::string::npos);
  CHECK(message(R"({"learning_rate": "fast"})").find("config.learning_rate") != std::string::npos);
  CHECK(message(R"({"dropout": 1.0})").find("config.dropout") != std::string::npos);
  CHECK(message(R"({"beta_initial": 0})").find("config.beta_initial") != std::string::npos);
  CHECK(message(R"([1, 2])").find("config") != std::string::npos);
}

TEST_CASE("ROC AUC examples and tie handling") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(*roc_auc(s, y) == doctest::Approx(0.75));
  const std::vector<int> perfect{0, 1, 0, 1};
  const std::vector<double> ordered{0.1, 0.9, 0.2, 0.8};
  CHECK(*roc_auc(ordered, perfect) == 1.0);
  const std::vector<int> reversed{1, 0, 1, 0};
  CHECK(*roc_auc(ordered, reversed) == 0.0);
  const std::vector<int> single{1, 1, 1, 1};
  CHECK_FALSE(roc_auc(ordered, single));
  const std::vector<double> undefined{0.1, std::nan(""), 0.2, 0.8};
  CHECK_FALSE(roc_auc(undefined, perfect));

  Rng rng(7);
  std::vector<double> tied(500);
  std::vector<int> labels(500);
  for (std::size_t i = 0; i < 500; ++i) {
    labels[i] = static_cast<int>(rng.below(2));
    tied[i] = static_cast<double>(rng.below(5) + labels[i]);
  }
  CHECK(*roc_auc(tied, labels) == doctest::Approx(oracle::pairwise_auc(tied, labels)).epsilon(1e-12));
}

TEST_CASE("uninformative scores give an AUC near one half") {
  Rng rng(8);
  std::vector<double> scores(10000);
  std::vector<int> labels(10000);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform();
    labels[i] = static_cast<int>(i % 2);
  }
  CHECK(std::abs(*roc_auc(scores, labels) - 0.5) < 0.02);
}

TEST_CASE("evaluation matches a direct forward pass") {
  const LoadedDataset d = fixture::synthetic_binary(400);
  const DibModel model = DibModel::create(ModelConfig::for_table(d.table, fixture::quick_config().model), 3);
  const auto& rows = d.splits.validation;
  const MetricSet m = evaluate(model, d.table, rows);
  CHECK(m.count == rows.size());

  std::vector<Tensor> inputs;
  for (std::size_t f = 0; f < d.table.features.size(); ++f) inputs.push_back(encode_column(d.table, f, rows));
  Tape tape(false);
  const ForwardResult out = model.forward(tape, inputs, ForwardOptions{}, nullptr);
  long double ce = 0.0L;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::span<const double> logits(out.prediction.value().data() + 2 * r, 2);
    const auto target = static_cast<std::size_t>(d.table.targets[rows[r]]);
    ce += oracle::naive_cross_entropy(logits, target);
    correct += (logits[1] > logits[0] ? 1u : 0u) == target;
  }
  CHECK(m.cross_entropy == doctest::Approx(static_cast<double>(ce / rows.size())).epsilon(1e-12));
  CHECK(m.accuracy == doctest::Approx(static_cast<double>(correct) / static_cast<double>(rows.size())));
  REQUIRE(m.auc);
  CHECK(*m.auc >= 0.0);
  CHECK(*m.auc <= 1.0);

  // Sampled evaluation with a fixed seed is reproducible.
  const EvalOptions sampled{16, 9};
  CHECK(evaluate(model, d.table, rows, sampled).cross_entropy ==
        evaluate(model, d.table, rows, sampled).cross_entropy);
}

TEST_CASE("a run logs consistent points and is reproducible by seed") {
  const LoadedDataset d = fixture::synthetic_binary(1000);
  const TrainConfig config = fixture::quick_config();
  DibModel m1 = DibModel::create(ModelConfig::for_table(d.table, config.model), config.seed);
  DibModel m2 = DibModel::create(ModelConfig::for_table(d.table, config.model), config.seed);
  const Trajectory a = train(config, d.table, d.splits, m1);
  const Trajectory b = train(config, d.table, d.splits, m2);
  CHECK(trajectory_text(a) == trajectory_text(b));
  CHECK(m1.params() == m2.params());

  REQUIRE(a.points.size() == 330 / 50 + 1);
  CHECK(a.points.back().step == 330);
  CHECK(a.channel_names == std::vector<std::string>{"A", "B"});
  CHECK(a.metric_names ==
        std::vector<std::string>{"val_accuracy", "val_auc", "test_error", "test_accuracy", "test_auc"});
  for (const auto& p : a.points) {
    CHECK(p.beta == beta_schedule(p.step, config));
    double sum = 0.0;
    for (double k : p.kl_bits) sum += k;
    CHECK(std::abs(sum - p.kl_total_bits) < 1e-9);
    CHECK(std::isfinite(p.train_error));
    CHECK(p.checkpoint.empty());
  }

  TrainConfig other = config;
  other.seed = config.seed + 1;
  DibModel m3 = DibModel::create(ModelConfig::for_table(d.table, other.model), other.seed);
  CHECK(trajectory_text(train(other, d.table, d.splits, m3)) != trajectory_text(a));
}

TEST_CASE("checkpoints reload to the logged validation numbers") {
  const LoadedDataset d = fixture::synthetic_binary(800);
  const TrainConfig config = fixture::quick_config();
  DibModel model = DibModel::create(ModelConfig::for_table(d.table, config.model), config.seed);
  fixture::TempDir dir("ckpt");
  TrainHooks hooks;
  hooks.checkpoint_dir = dir.path();
  hooks.checkpoint_metadata = {{"tag", "t"}};
  std::size_t seen = 0;
  hooks.on_point = [&](const InfoPlanePoint&) { ++seen; };
  const Trajectory t = train(config, d.table, d.splits, model, hooks);
  CHECK(seen == t.points.size());
  CHECK(t.checkpoints() == std::vector<std::string>{checkpoint_file_name(100), checkpoint_file_name(200),
                                                    checkpoint_file_name(300), checkpoint_file_name(330)});
  for (const auto& p : t.points) {
    if (p.checkpoint.empty()) continue;
    const Checkpoint ck = load_checkpoint(dir.path() / p.checkpoint);
    CHECK(ck.metadata.at("step") == p.step);
    CHECK(ck.metadata.at("tag") == "t");
    const MetricSet val = evaluate(ck.model, d.table, d.splits.validation);
    CHECK(val.cross_entropy == p.val_error);
    CHECK(nats_to_bits(val.kl_nats[0]) == p.kl_bits[0]);
    CHECK(val.accuracy == p.metrics[0]);
  }
}

TEST_CASE("regression runs report RMSE on the original scale") {
  const LoadedDataset d = load_csv_text(fixture::regression_csv(), fixture::regression_schema());
  TrainConfig config = fixture::quick_config();
  DibModel model = DibModel::create(ModelConfig::for_table(d.table, config.model), config.seed);
  const Trajectory t = train(config, d.table, d.splits, model);
  CHECK(t.metric_names == std::vector<std::string>{"test_error"});
  const auto& last = t.points.back();
  double best = last.val_error;
  for (const auto& p : t.points) best = std::min(best, p.val_error);
  MESSAGE("best validation RMSE " << best << ", target std " << d.table.target.std);
  CHECK(best < 0.8 * d.table.target.std);
  CHECK(std::isfinite(last.train_error));
  const MetricSet val = evaluate(model, d.table, d.splits.validation);
  CHECK(val.rmse == last.val_error);
}

TEST_CASE("an uninformative target compresses everything away") {
  std::ostringstream csv;
  csv << "a,b,y\n";
  Rng rng(12);
  for (int i = 0; i < 600; ++i) csv << rng.below(3) << "," << rng.uniform(0, 1) << ",pos\n";
  const Schema schema = Schema::from_json(json::parse(R"({
    "task": "binary", "split": [0.6, 0.2, 0.2],
    "columns": [{"name": "a", "kind": "categorical"}, {"name": "b", "kind": "continuous"},
                {"name": "y", "kind": "categorical", "target": true, "values": ["neg", "pos"]}]})"));
  const LoadedDataset d = load_csv_text(csv.str(), schema);
  TrainConfig config = fixture::quick_config();
  config.annealing_steps = 600;
  DibModel model = DibModel::create(ModelConfig::for_table(d.table, config.model), config.seed);
  const Trajectory t = train(config, d.table, d.splits, model);
  const auto& last = t.points.back();
  CHECK(last.val_error < 0.05);
  CHECK(last.kl_total_bits < 0.1);
  // A single observed class leaves the AUC undefined.
  CHECK(std::isnan(last.metrics[1]));
}

TEST_CASE("a diverging run aborts with the step and the last checkpoint") {
  const LoadedDataset d = fixture::synthetic_binary(400);
  TrainConfig config = fixture::quick_config();
  config.learning_rate = 1e200;
  config.eval_every = 1;
  config.checkpoint_every = 1;
  DibModel model = DibModel::create(ModelConfig::for_table(d.table, config.model), config.seed);
  fixture::TempDir dir("diverge");
  TrainHooks hooks;
  hooks.checkpoint_dir = dir.path();
  try {
    train(config, d.table, d.splits, model, hooks);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(e.step() >= 2);
    CHECK(e.last_checkpoint() == (dir.path() / checkpoint_file_name(e.step() - 1)).string());
  }
}

TEST_CASE("a model built for another table is refused") {
  const LoadedDataset d = fixture::synthetic_binary(400);
  const LoadedDataset r = load_csv_text(fixture::regression_csv(), fixture::regression_schema());
  const TrainConfig config = fixture::quick_config();
  DibModel model = DibModel::create(ModelConfig::for_table(r.table, config.model), 1);
  CHECK_THROWS(train(config, d.table, d.splits, model));
}

TEST_CASE("trajectory CSV round-trips") {
  const LoadedDataset d = fixture::synthetic_binary(600);
  TrainConfig config = fixture::quick_config();
  config.annealing_steps = 100;
  DibModel model = DibModel::create(ModelConfig::for_table(d.table, config.model), config.seed);
  const Trajectory t = train(config, d.table, d.splits, model);
  fixture::TempDir dir("traj");
  const auto path = dir.path() / "trajectory.csv";
  write_trajectory_csv(path, t);
  const Trajectory back = read_trajectory_csv(path);
  CHECK(back.channel_names == t.channel_names);
  CHECK(back.metric_names == t.metric_names);
  CHECK(trajectory_text(back) == trajectory_text(t));

  std::ofstream(dir.path() / "bad.csv") << "step,beta\n1,x\n";
  CHECK_THROWS_AS(read_trajectory_csv(dir.path() / "bad.csv"), IngestionError);
}
