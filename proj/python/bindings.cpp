// Python bindings. Structured values cross the boundary as JSON text; the
// package __init__ decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dib/analysis/analysis.hpp"
#include "dib/cli/commands.hpp"
#include "dib/core/gaussian.hpp"
#include "dib/errors.hpp"
#include "dib/io/checkpoint.hpp"
#include "dib/selfcheck.hpp"
#include "dib/synthetic/joint.hpp"
#include "dib/training/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

dib::TrainConfig config_from(const std::string& text) {
  return dib::TrainConfig::from_json(text.empty() ? json::object() : json::parse(text));
}

json trajectory_json(const dib::Trajectory& t) {
  json points = json::array();
  for (const auto& p : t.points) {
    json metrics = json::object();
    for (std::size_t i = 0; i < t.metric_names.size(); ++i) metrics[t.metric_names[i]] = p.metrics[i];
    points.push_back({{"step", p.step},
                      {"beta", p.beta},
                      {"kl_bits", p.kl_bits},
                      {"kl_total_bits", p.kl_total_bits},
                      {"train_error", p.train_error},
                      {"val_error", p.val_error},
                      {"metrics", metrics},
                      {"checkpoint", p.checkpoint}});
  }
  return {{"channels", t.channel_names}, {"metrics", t.metric_names}, {"points", points}};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distributed information bottleneck core";

  auto base = py::register_exception<dib::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<dib::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<dib::ContractError>(m, "ContractError", base.ptr());
  py::register_exception<dib::IngestionError>(m, "IngestionError", base.ptr());
  py::register_exception<dib::TrainingError>(m, "TrainingError", base.ptr());

  m.def(
      "beta_schedule",
      [](std::size_t step, const std::string& config) { return dib::beta_schedule(step, config_from(config)); },
      py::arg("step"), py::arg("config") = "");

  m.def(
      "kl_to_standard_normal",
      [](std::vector<double> mean, std::vector<double> log_variance) {
        return dib::kl_to_standard_normal(dib::DiagonalGaussian(std::move(mean), std::move(log_variance)));
      },
      py::arg("mean"), py::arg("log_variance"));

  m.def(
      "bhattacharyya_coefficient",
      [](std::vector<double> m1, std::vector<double> lv1, std::vector<double> m2, std::vector<double> lv2) {
        return dib::bhattacharyya_coefficient(dib::DiagonalGaussian(std::move(m1), std::move(lv1)),
                                              dib::DiagonalGaussian(std::move(m2), std::move(lv2)));
      },
      py::arg("mean_a"), py::arg("log_variance_a"), py::arg("mean_b"), py::arg("log_variance_b"));

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) { return dib::roc_auc(scores, labels); },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "entropy_bits", [](const std::vector<double>& p) { return dib::synthetic::entropy(p); }, py::arg("distribution"));

  m.def(
      "ground_truth",
      [](const std::string& spec) {
        return dib::synthetic::ground_truth(dib::synthetic::DiscreteJoint::from_json(json::parse(spec))).dump();
      },
      py::arg("spec"));

  m.def("acceptance_joint", [] { return dib::synthetic::acceptance_joint().to_json().dump(); });

  m.def(
      "synth",
      [](const fs::path& spec, const fs::path& out, std::size_t n, std::uint64_t seed) {
        std::ostringstream log;
        dib::cli::cmd_synth({spec, n, seed, out}, log);
        return log.str();
      },
      py::arg("spec"), py::arg("out"), py::arg("n") = dib::synthetic::kDefaultSampleCount, py::arg("seed") = 0);

  m.def(
      "train",
      [](const fs::path& data, const fs::path& schema, const fs::path& out, std::optional<fs::path> config,
         std::optional<std::uint64_t> seed) {
        std::ostringstream log;
        dib::cli::TrainArgs args{data, schema, std::move(config), out, seed};
        py::gil_scoped_release release;
        return dib::cli::cmd_train(args, log).root;
      },
      py::arg("data"), py::arg("schema"), py::arg("out"), py::arg("config") = std::nullopt,
      py::arg("seed") = std::nullopt);

  m.def(
      "analyze",
      [](const fs::path& run, std::vector<double> budgets, std::vector<std::string> features,
         std::vector<double> at_budget, double threshold_bits) {
        dib::cli::AnalyzeArgs args;
        args.run = run;
        if (!budgets.empty()) args.budgets = std::move(budgets);
        args.features = std::move(features);
        args.at_budget = std::move(at_budget);
        args.threshold_bits = threshold_bits;
        std::ostringstream log;
        py::gil_scoped_release release;
        dib::cli::cmd_analyze(args, log);
        return log.str();
      },
      py::arg("run"), py::arg("budgets") = std::vector<double>{}, py::arg("features") = std::vector<std::string>{},
      py::arg("at_budget") = std::vector<double>{}, py::arg("threshold_bits") = dib::kDefaultImportanceThreshold);

  m.def(
      "read_trajectory", [](const fs::path& path) { return trajectory_json(dib::read_trajectory_csv(path)).dump(); },
      py::arg("path"));

  m.def(
      "checkpoint_metadata",
      [](const fs::path& path) {
        const dib::Checkpoint ck = dib::load_checkpoint(path);
        json doc = ck.metadata;
        doc["model"] = ck.model.config().to_json();
        return doc.dump();
      },
      py::arg("path"));

  m.def(
      "evaluate_checkpoint",
      [](const fs::path& run, const std::string& checkpoint, const std::string& split) {
        const dib::cli::RunDirectory dir{run};
        const json manifest = dir.read_manifest();
        const dib::Schema schema = dib::Schema::from_json(manifest.at("schema_document"));
        const dib::LoadedDataset data = dib::load_csv(manifest.at("data").get<std::string>(), schema);
        const dib::Checkpoint ck = dib::load_checkpoint(dir.checkpoints() / checkpoint);
        const auto& rows = split == "train"        ? data.splits.train
                           : split == "validation" ? data.splits.validation
                           : split == "test"       ? data.splits.test
                                                   : throw dib::ConfigError("split must be train, validation or test");
        const dib::MetricSet metrics = dib::evaluate(ck.model, data.table, rows);
        json doc{{"count", metrics.count}, {"error", metrics.error()}, {"kl_nats", metrics.kl_nats}};
        if (metrics.task == dib::TaskKind::regression) {
          doc["rmse"] = metrics.rmse;
        } else {
          doc["cross_entropy"] = metrics.cross_entropy;
          doc["accuracy"] = metrics.accuracy;
          doc["auc"] = metrics.auc ? json(*metrics.auc) : json(nullptr);
        }
        return doc.dump();
      },
      py::arg("run"), py::arg("checkpoint"), py::arg("split") = "validation");

  m.def("selfcheck", [] {
    std::vector<std::tuple<std::string, bool, std::string>> out;
    for (const auto& r : dib::run_selfcheck()) out.emplace_back(r.name, r.passed, r.detail);
    return out;
  });
}
