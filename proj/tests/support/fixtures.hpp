#pragma once

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>

#include <unistd.h>

#include "dib/core/rng.hpp"
#include "dib/data/dataset.hpp"
#include "dib/synthetic/joint.hpp"
#include "dib/training/trainer.hpp"

namespace fixture {

// Binary dataset sampled from the two-feature acceptance joint.
inline dib::LoadedDataset synthetic_binary(std::size_t n = 2000, std::uint64_t seed = 1) {
  const auto joint = dib::synthetic::acceptance_joint();
  return dib::synthetic::to_dataset(joint, dib::synthetic::sample(joint, n, seed), {0.6, 0.2, 0.2}, seed);
}

// y = 2 x + noise, plus an irrelevant categorical column.
inline std::string regression_csv(std::size_t n = 600, std::uint64_t seed = 2) {
  dib::Rng rng(seed);
  std::ostringstream out;
  out << "x,tag,y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(-2.0, 2.0);
    out << x << "," << (rng.below(2) ? "p" : "q") << "," << 2.0 * x + 0.1 * rng.normal() << "\n";
  }
  return out.str();
}

inline dib::Schema regression_schema() {
  return dib::Schema::from_json(nlohmann::json::parse(R"({
    "task": "regression", "split": [0.6, 0.2, 0.2], "seed": 4,
    "columns": [{"name": "x", "kind": "continuous"}, {"name": "tag", "kind": "categorical"},
                {"name": "y", "kind": "continuous", "target": true}]})"));
}

// A few hundred steps of a small network.
inline dib::TrainConfig quick_config(std::uint64_t seed = 5) {
  dib::TrainConfig c;
  c.batch_size = 64;
  c.learning_rate = 3e-3;
  c.annealing_steps = 300;
  c.eval_every = 50;
  c.checkpoint_every = 100;
  c.seed = seed;
  c.model.embedding_dim = 2;
  c.model.encoder_hidden = {16};
  c.model.decoder_hidden = {16};
  return c;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("dib_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
