#include "dib/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "dib/analysis/analysis.hpp"
#include "dib/data/dataset.hpp"
#include "dib/errors.hpp"
#include "dib/io/checkpoint.hpp"
#include "dib/model/dib_model.hpp"
#include "dib/selfcheck.hpp"
#include "dib/synthetic/joint.hpp"
#include "dib/training/trainer.hpp"

namespace dib::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + what + " '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
    if (!out) throw ConfigError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string safe_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "feature" : out;
}

json point_json(const InfoPlanePoint& p, const Trajectory& t) {
  json kl = json::object();
  for (std::size_t c = 0; c < t.channel_names.size(); ++c) kl[t.channel_names[c]] = p.kl_bits[c];
  json metrics = json::object();
  for (std::size_t m = 0; m < t.metric_names.size(); ++m) {
    metrics[t.metric_names[m]] = std::isfinite(p.metrics[m]) ? json(p.metrics[m]) : json(nullptr);
  }
  return {{"step", p.step},       {"beta", p.beta},           {"kl_total_bits", p.kl_total_bits},
          {"kl_bits", kl},        {"train_error", p.train_error}, {"val_error", p.val_error},
          {"metrics", metrics},   {"checkpoint", p.checkpoint}};
}

void ensure_fresh_directory(const fs::path& root) {
  std::error_code ec;
  if (fs::exists(root, ec)) {
    if (!fs::is_directory(root)) throw ConfigError("--out '" + root.string() + "' exists and is not a directory");
    if (!fs::is_empty(root)) throw ConfigError("--out '" + root.string() + "' is not empty");
  }
  fs::create_directories(root, ec);
  if (ec) throw ConfigError("cannot create '" + root.string() + "': " + ec.message());
}

// The checkpointed point whose total KL is nearest the budget.
const InfoPlanePoint* checkpoint_near(const Trajectory& t, double budget) {
  const InfoPlanePoint* best = nullptr;
  for (const auto& p : t.points) {
    if (p.checkpoint.empty()) continue;
    if (!best || std::abs(p.kl_total_bits - budget) < std::abs(best->kl_total_bits - budget)) best = &p;
  }
  return best;
}

}  // namespace

json RunDirectory::read_manifest() const {
  if (!fs::exists(manifest())) throw ConfigError("'" + root.string() + "' is not a run directory (no manifest.json)");
  return read_json_file(manifest(), "manifest");
}

// ---- train -----------------------------------------------------------------------

RunDirectory cmd_train(const TrainArgs& args, std::ostream& log) {
  const Schema schema = Schema::load(args.schema);
  json config_doc = json::object();
  if (args.config) config_doc = read_json_file(*args.config, "config");
  TrainConfig config = TrainConfig::from_json(config_doc);
  bool seed_drawn = false;
  if (args.seed) {
    config.seed = *args.seed;
  } else if (!config_doc.contains("seed")) {
    std::random_device rd;
    config.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    seed_drawn = true;
  }

  const LoadedDataset data = load_csv(args.data, schema);
  const DatasetTable& table = data.table;
  log << "loaded " << table.row_count() << " rows (" << table.rejected_rows << " rejected), "
      << table.features.size() << " features; split " << data.splits.train.size() << "/"
      << data.splits.validation.size() << "/" << data.splits.test.size() << "\n";

  DibModel model = DibModel::create(ModelConfig::for_table(table, config.model), config.seed);

  const RunDirectory run{args.out};
  ensure_fresh_directory(run.root);
  fs::create_directories(run.checkpoints());
  const std::string hash = schema_hash(table);

  json features = json::array();
  for (const auto& f : table.features) features.push_back(to_json(f));
  json manifest{{"format", "dib-run"},
                {"version", 1},
                {"status", "running"},
                {"data", fs::absolute(args.data).string()},
                {"schema", fs::absolute(args.schema).string()},
                {"schema_document", schema.to_json()},
                {"schema_hash", hash},
                {"seed", config.seed},
                {"seed_drawn", seed_drawn},
                {"config", config.to_json()},
                {"model", model.config().to_json()},
                {"features", features},
                {"target", to_json(table.target)},
                {"rows", {{"loaded", table.row_count()},
                          {"rejected", table.rejected_rows},
                          {"train", data.splits.train.size()},
                          {"validation", data.splits.validation.size()},
                          {"test", data.splits.test.size()}}},
                {"trajectory", "trajectory.csv"}};
  write_json(run.manifest(), manifest);

  std::ofstream trajectory_out(run.trajectory(), std::ios::binary);
  if (!trajectory_out) throw ConfigError("cannot write " + run.trajectory().string());
  Trajectory shape;
  shape.channel_names = trajectory_channel_names(model);
  shape.metric_names = trajectory_metric_names(table.task());
  write_trajectory_header(trajectory_out, shape);
  trajectory_out.flush();

  TrainHooks hooks;
  hooks.checkpoint_dir = run.checkpoints();
  hooks.checkpoint_metadata = {{"schema_hash", hash}, {"seed", config.seed}, {"features", features},
                               {"target", to_json(table.target)}};
  hooks.on_point = [&](const InfoPlanePoint& p) {
    write_trajectory_row(trajectory_out, p);
    trajectory_out.flush();
    log << "step " << p.step << "  beta " << p.beta << "  kl " << p.kl_total_bits << " bits  val_error "
        << p.val_error << "\n";
  };

  const auto started = std::chrono::steady_clock::now();
  Trajectory trajectory;
  try {
    trajectory = train(config, table, data.splits, model, hooks);
  } catch (const TrainingError& e) {
    manifest["status"] = "aborted";
    manifest["abort"] = {{"step", e.step()}, {"message", e.what()}, {"last_checkpoint", e.last_checkpoint()}};
    write_json(run.manifest(), manifest);
    throw;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  manifest["status"] = "complete";
  manifest["wall_clock_seconds"] = seconds;
  manifest["steps"] = config.total_steps();
  manifest["checkpoints"] = trajectory.checkpoints();
  if (!trajectory.points.empty()) manifest["final"] = point_json(trajectory.points.back(), trajectory);
  write_json(run.manifest(), manifest);
  log << "finished " << config.total_steps() << " steps in " << seconds << " s; run written to "
      << run.root.string() << "\n";
  return run;
}

// ---- analyze ---------------------------------------------------------------------

void cmd_analyze(const AnalyzeArgs& args, std::ostream& log) {
  const RunDirectory run{args.run};
  const json manifest = run.read_manifest();
  if (!fs::exists(run.trajectory())) throw ConfigError("run has no trajectory.csv");
  const Trajectory trajectory = read_trajectory_csv(run.trajectory());
  if (trajectory.points.empty()) throw ConfigError("run has no trajectory points");
  if (trajectory.checkpoints().empty()) throw ConfigError("run has no checkpoints");
  for (std::size_t i = 1; i < args.budgets.size(); ++i) {
    if (!(args.budgets[i] > args.budgets[i - 1])) throw ConfigError("--budgets must be strictly ascending");
  }

  Schema schema;
  std::string data_path;
  std::uint64_t seed = 0;
  try {
    schema = Schema::from_json(manifest.at("schema_document"));
    data_path = manifest.at("data").get<std::string>();
    seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest is incomplete: ") + e.what());
  }
  const LoadedDataset data = load_csv(data_path, schema);
  if (schema_hash(data.table) != manifest.value("schema_hash", "")) {
    throw ConfigError("dataset at '" + data_path + "' no longer matches the run's schema hash");
  }
  const DatasetTable& table = data.table;

  const bool fused = manifest.contains("model") && manifest["model"].value("fused", false);
  std::vector<std::size_t> features;
  if (args.features.empty()) {
    if (!fused) {
      for (std::size_t f = 0; f < table.features.size(); ++f) features.push_back(f);
    }
  } else {
    if (fused) throw ConfigError("confusion matrices are not available for a fused-encoder run");
    for (const auto& name : args.features) {
      const auto idx = table.feature_index(name);
      if (!idx) {
        std::string valid;
        for (const auto& n : table.feature_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw ConfigError("unknown feature '" + name + "'; valid names: " + valid);
      }
      features.push_back(*idx);
    }
  }
  const std::vector<double> at_budget = args.at_budget.empty() ? args.budgets : args.at_budget;

  ImportanceOptions importance_options;
  importance_options.threshold_bits = args.threshold_bits;
  const ImportanceReport importance = importance_report(trajectory, args.budgets, importance_options);
  const InfoPlaneExport plane = info_plane_export(trajectory, args.budgets);

  struct Pending {
    ConfusionMatrix matrix;
    double budget;
  };
  std::vector<Pending> matrices;
  for (double budget : at_budget) {
    const InfoPlanePoint* point = checkpoint_near(trajectory, budget);
    const Checkpoint ckpt = load_checkpoint(run.checkpoints() / point->checkpoint);
    if (ckpt.metadata.value("schema_hash", "") != manifest.value("schema_hash", "")) {
      throw ConfigError("checkpoint " + point->checkpoint + " belongs to a different dataset");
    }
    for (std::size_t f : features) {
      ConfusionMatrix m = confusion_matrix(ckpt.model, table, f, seed);
      m.checkpoint = "checkpoints/" + point->checkpoint;
      m.step = point->step;
      m.beta = point->beta;
      m.kl_total_bits = point->kl_total_bits;
      matrices.push_back({std::move(m), budget});
    }
  }

  // Everything is computed; only now touch the run directory.
  fs::create_directories(run.confusion());
  fs::create_directories(run.importance());
  fs::create_directories(run.infoplane());
  for (const auto& [m, budget] : matrices) {
    const std::string stem = safe_name(m.feature) + "_step_" + std::to_string(m.step);
    write_confusion_csv(run.confusion() / (stem + ".csv"), m);
    json doc = to_json(m);
    doc["budget_bits"] = budget;
    write_json(run.confusion() / (stem + ".json"), doc);
  }
  write_importance_csv(run.importance() / "importance.csv", importance);
  json importance_doc = to_json(importance);
  importance_doc["source"] = "trajectory.csv";
  write_json(run.importance() / "importance.json", importance_doc);
  write_budgets_csv(run.infoplane() / "budgets.csv", plane);
  write_frontier_csv(run.infoplane() / "frontier.csv", plane);
  json plane_doc = to_json(plane);
  plane_doc["source"] = "trajectory.csv";
  write_json(run.infoplane() / "infoplane.json", plane_doc);
  log << "wrote " << matrices.size() << " confusion matrices, importance report and information-plane export to "
      << run.root.string() << "\n";
}

// ---- synth -----------------------------------------------------------------------

void cmd_synth(const SynthArgs& args, std::ostream& log) {
  const synthetic::DiscreteJoint joint = synthetic::DiscreteJoint::load(args.spec);
  if (args.n == 0) throw ConfigError("--n must be at least 1");
  const synthetic::Sample sample = synthetic::sample(joint, args.n, args.seed);
  std::error_code ec;
  fs::create_directories(args.out, ec);
  if (ec) throw ConfigError("cannot create '" + args.out.string() + "': " + ec.message());
  write_text(args.out / "data.csv", synthetic::to_csv(joint, sample));
  write_json(args.out / "schema.json", synthetic::schema_for(joint).to_json());
  json truth = synthetic::ground_truth(joint);
  truth["n"] = args.n;
  truth["seed"] = args.seed;
  truth["plug_in_mi_bits"] = synthetic::plug_in_mutual_information(joint, sample);
  write_json(args.out / "ground_truth.json", truth);
  log << "H(Y) = " << truth["h_y_bits"].get<double>() << " bits, H(Y|X) = " << truth["h_y_given_x_bits"].get<double>()
      << " bits, I(X;Y) = " << truth["mi_bits"].get<double>() << " bits\n";
  for (const auto& f : truth["features"]) {
    log << "I(" << f["name"].get<std::string>() << ";Y) = " << f["mi_bits"].get<double>() << " bits\n";
  }
  log << "wrote " << args.n << " rows to " << (args.out / "data.csv").string() << "\n";
}

// ---- selfcheck -------------------------------------------------------------------

bool cmd_selfcheck(std::ostream& log) {
  bool ok = true;
  for (const auto& r : run_selfcheck()) {
    log << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok;
}

int run_command(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const IngestionError& e) {
    err << "ingestion error: " << e.what() << "\n";
    return kExitIngestion;
  } catch (const TrainingError& e) {
    err << "numerical abort at step " << e.step() << ": " << e.what() << "\n";
    err << "last good checkpoint: " << (e.last_checkpoint().empty() ? "none" : e.last_checkpoint()) << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace dib::cli
