#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dib/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace dib::cli;

  CLI::App app{"Distributed information bottleneck for tabular data"};
  app.require_subcommand(1);

  TrainArgs train;
  std::string train_config;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train one annealed run");
  train_cmd->add_option("--data", train.data, "Dataset CSV")->required();
  train_cmd->add_option("--schema", train.schema, "Schema JSON")->required();
  train_cmd->add_option("--config", train_config, "Training config JSON (defaults when omitted)");
  train_cmd->add_option("--out", train.out, "Run directory to create")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Run seed (drawn at random when omitted)");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Export confusion matrices, importance and info-plane data");
  analyze_cmd->add_option("--run", analyze.run, "Run directory")->required();
  analyze_cmd->add_option("--budgets", analyze.budgets, "Total-KL budgets in bits, ascending")->delimiter(',');
  analyze_cmd->add_option("--features", analyze.features, "Features to export (default: all)")->delimiter(',');
  analyze_cmd->add_option("--at-budget", analyze.at_budget, "Budgets selecting checkpoints for confusion matrices")
      ->delimiter(',');
  analyze_cmd->add_option("--threshold", analyze.threshold_bits, "First-contribution threshold in bits");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Sample a discrete joint and report exact information quantities");
  synth_cmd->add_option("--spec", synth.spec, "Joint specification JSON")->required();
  synth_cmd->add_option("--n", synth.n, "Number of rows")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Sampling seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  auto* selfcheck_cmd = app.add_subcommand("selfcheck", "Run built-in numerical checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  return run_command(
      [&]() -> int {
        if (train_cmd->parsed()) {
          if (!train_config.empty()) train.config = train_config;
          if (seed_opt->count() > 0) train.seed = train_seed;
          cmd_train(train, std::cout);
        } else if (analyze_cmd->parsed()) {
          cmd_analyze(analyze, std::cout);
        } else if (synth_cmd->parsed()) {
          cmd_synth(synth, std::cout);
        } else if (selfcheck_cmd->parsed()) {
          return cmd_selfcheck(std::cout) ? kExitOk : kExitCheckFailed;
        }
        return kExitOk;
      },
      std::cerr);
}
