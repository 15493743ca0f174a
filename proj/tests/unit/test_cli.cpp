#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dib/cli/commands.hpp"
#include "dib/errors.hpp"
#include "dib/io/csv.hpp"
#include "fixtures.hpp"

using namespace dib;
using namespace dib::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::size_t file_count(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

// Synthesizes a dataset and trains a short run on it.
struct SmallRun {
  fixture::TempDir dir{"cli"};
  fs::path run;

  SmallRun() {
    write_text(dir.path() / "joint.json", R"({
      "features": [{"name": "A", "values": ["0", "1"]}, {"name": "B", "values": ["0", "1"]}],
      "p_y1": [[0.9, 0.7], [0.3, 0.1]]})");
    std::ostringstream log;
    cmd_synth({dir.path() / "joint.json", 800, 3, dir.path() / "synth"}, log);
    write_text(dir.path() / "config.json", fixture::quick_config().to_json().dump());
    TrainArgs args;
    args.data = dir.path() / "synth" / "data.csv";
    args.schema = dir.path() / "synth" / "schema.json";
    args.config = dir.path() / "config.json";
    args.out = dir.path() / "run";
    args.seed = 11;
    run = cmd_train(args, log).root;
  }
};

}  // namespace

TEST_CASE("errors map to exit codes") {
  std::ostringstream err;
  CHECK(run_command([] { return 0; }, err) == kExitOk);
  CHECK(run_command([]() -> int { throw ConfigError("c"); }, err) == kExitConfig);
  CHECK(run_command([]() -> int { throw ContractError("k"); }, err) == kExitConfig);
  CHECK(run_command([]() -> int { throw IngestionError("i", 3, "col"); }, err) == kExitIngestion);
  CHECK(run_command([]() -> int { throw TrainingError("t", 7, "ck"); }, err) == kExitNumerical);
  CHECK(err.str().find("row 3") != std::string::npos);
  CHECK(err.str().find("last good checkpoint: ck") != std::string::npos);
}

TEST_CASE("synth writes data, schema and ground truth") {
  SmallRun r;
  const fs::path out = r.dir.path() / "synth";
  CHECK(fs::exists(out / "data.csv"));
  const auto doc = csv::read_file(out / "data.csv");
  CHECK(doc.header == std::vector<std::string>{"A", "B", "y"});
  CHECK(doc.records.size() == 800);
  std::ifstream truth_in(out / "ground_truth.json");
  const json truth = json::parse(truth_in);
  CHECK(truth.at("mi_bits").get<double>() == doctest::Approx(0.324857).epsilon(1e-5));
  CHECK(truth.at("n") == 800);
}

TEST_CASE("train writes a complete run and analyze exports from it") {
  SmallRun r;
  const RunDirectory run{r.run};
  const json manifest = run.read_manifest();
  CHECK(manifest.at("status") == "complete");
  CHECK(manifest.at("seed") == 11);
  CHECK(manifest.at("seed_drawn") == false);
  REQUIRE(manifest.at("features").size() == 2);
  CHECK(manifest.at("features")[1].at("display_name") == "B");
  CHECK(fs::exists(run.trajectory()));
  CHECK(fs::exists(run.checkpoints() / checkpoint_file_name(330)));

  std::ostringstream log;
  AnalyzeArgs a;
  a.run = r.run;
  a.budgets = {0.5, 2.0};
  cmd_analyze(a, log);
  CHECK(fs::exists(run.importance() / "importance.csv"));
  CHECK(fs::exists(run.importance() / "importance.json"));
  CHECK(fs::exists(run.infoplane() / "frontier.csv"));
  CHECK(fs::exists(run.infoplane() / "budgets.csv"));
  std::size_t confusion_files = 0;
  for (const auto& e : fs::directory_iterator(run.confusion())) confusion_files += e.path().extension() == ".csv";
  CHECK(confusion_files >= 2);
}

TEST_CASE("analyze validates before writing anything") {
  SmallRun r;
  const std::size_t before = file_count(r.run);
  std::ostringstream log;
  AnalyzeArgs a;
  a.run = r.run;
  a.features = {"A", "nope"};
  try {
    cmd_analyze(a, log);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("valid names: A, B") != std::string::npos);
  }
  CHECK(file_count(r.run) == before);
  a.features = {};
  a.budgets = {4.0, 2.0};
  CHECK_THROWS_AS(cmd_analyze(a, log), ConfigError);
  CHECK(file_count(r.run) == before);
  a.run = r.dir.path() / "missing";
  CHECK_THROWS_AS(cmd_analyze(a, log), ConfigError);
}

TEST_CASE("train refuses a non-empty output directory and bad inputs") {
  SmallRun r;
  std::ostringstream log;
  TrainArgs args;
  args.data = r.dir.path() / "synth" / "data.csv";
  args.schema = r.dir.path() / "synth" / "schema.json";
  args.out = r.run;
  CHECK_THROWS_AS(cmd_train(args, log), ConfigError);

  write_text(r.dir.path() / "broken.csv", "A,B,y\n0,1,1\n0,\"x,1\n");
  args.data = r.dir.path() / "broken.csv";
  args.out = r.dir.path() / "run2";
  CHECK_THROWS_AS(cmd_train(args, log), IngestionError);

  write_text(r.dir.path() / "bad_config.json", R"({"learning_rate": -1})");
  args.data = r.dir.path() / "synth" / "data.csv";
  args.config = r.dir.path() / "bad_config.json";
  args.out = r.dir.path() / "run3";
  CHECK_THROWS_AS(cmd_train(args, log), ConfigError);
  CHECK_FALSE(fs::exists(args.out));
}
