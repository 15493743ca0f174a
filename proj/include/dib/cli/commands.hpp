#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dib::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitIngestion = 2,
  kExitNumerical = 3,
  kExitCheckFailed = 4,
};

// Layout of a training run on disk.
struct RunDirectory {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path trajectory() const { return root / "trajectory.csv"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path confusion() const { return root / "confusion"; }
  std::filesystem::path importance() const { return root / "importance"; }
  std::filesystem::path infoplane() const { return root / "infoplane"; }

  nlohmann::json read_manifest() const;
};

struct TrainArgs {
  std::filesystem::path data;
  std::filesystem::path schema;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct AnalyzeArgs {
  std::filesystem::path run;
  std::vector<double> budgets{2.0, 4.0, 8.0, 16.0};
  std::vector<std::string> features;  // empty: all
  std::vector<double> at_budget;      // empty: same as budgets
  double threshold_bits = 0.05;
};

struct SynthArgs {
  std::filesystem::path spec;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

// Each command throws the library's error types; run_command maps them onto
// exit codes and prints the message to `err`.
RunDirectory cmd_train(const TrainArgs& args, std::ostream& log);
void cmd_analyze(const AnalyzeArgs& args, std::ostream& log);
void cmd_synth(const SynthArgs& args, std::ostream& log);
// Returns true when every check passed.
bool cmd_selfcheck(std::ostream& log);

int run_command(const std::function<int()>& body, std::ostream& err);

}  // namespace dib::cli
