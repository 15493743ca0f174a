#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dib/core/gaussian.hpp"
#include "dib/core/mlp.hpp"
#include "dib/core/rng.hpp"
#include "dib/core/tape.hpp"
#include "dib/data/dataset.hpp"

namespace dib {

struct ModelConfig {
  std::vector<std::string> feature_names;
  std::vector<std::size_t> input_widths;  // encoded width per feature
  std::size_t embedding_dim = 8;
  std::vector<std::size_t> encoder_hidden{128, 128};
  std::vector<std::size_t> decoder_hidden{256, 256};
  std::size_t output_width = 2;
  TaskKind task = TaskKind::classification;
  double leaky_alpha = 0.2;
  // One encoder over the concatenation of all features (plain VIB).
  bool fused = false;

  // Feature names, widths, head and task taken from the table; architecture
  // fields are kept from `base`.
  static ModelConfig for_table(const DatasetTable& table, const ModelConfig& base);
  static ModelConfig for_table(const DatasetTable& table);

  std::size_t channel_count() const noexcept { return fused ? 1 : input_widths.size(); }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);
};

struct ForwardOptions {
  bool train = false;
  double dropout_rate = 0.0;
};

struct ForwardResult {
  Var prediction;       // [rows, output_width]: logits, or the standardized regression value
  std::vector<Var> kl;  // one [rows] vector of KL (nats) per channel
};

struct ChannelOutput {
  Var mean;          // [rows, d]
  Var log_variance;  // [rows, d], clamped
};

// Distributed VIB network: an encoder MLP per feature emitting mean and
// log-variance of a d-dimensional Gaussian, reparameterized samples
// concatenated in feature order, and a joint decoder MLP.
class DibModel {
 public:
  static DibModel create(ModelConfig config, std::uint64_t seed);
  // Rebuilds the structure for `config` and adopts `params`; names and shapes
  // must match what create() would produce.
  static DibModel from_parameters(ModelConfig config, ParameterSet params);

  const ModelConfig& config() const noexcept { return config_; }
  const ParameterSet& params() const noexcept { return params_; }
  ParameterSet& params() noexcept { return params_; }
  const Mlp& encoder(std::size_t channel) const { return encoders_.at(channel); }
  const Mlp& decoder() const noexcept { return decoder_; }
  std::size_t channel_count() const noexcept { return encoders_.size(); }

  // Gaussian parameters for one channel. `input` is the encoded feature
  // (or, in fused mode, the concatenation of all encoded features).
  ChannelOutput encode(std::size_t channel, Var input, const ForwardOptions& options, Rng* rng) const;

  // Train mode draws one noise sample per row and channel from `rng`;
  // evaluation mode feeds the posterior means to the decoder.
  ForwardResult forward(Tape& tape, std::span<const Tensor> inputs, const ForwardOptions& options,
                        Rng* rng) const;

  // Evaluation-mode Gaussians for each row of an encoded feature matrix.
  std::vector<DiagonalGaussian> encode_feature(std::size_t channel, const Tensor& encoded) const;
  DiagonalGaussian encode_feature(std::size_t channel, std::span<const double> encoded_value) const;

 private:
  DibModel() = default;
  void build(Rng& rng);

  ModelConfig config_;
  ParameterSet params_;
  std::vector<Mlp> encoders_;
  Mlp decoder_;
};

struct LossTerms {
  Var total;   // error + beta * kl_sum
  Var error;   // batch-mean cross entropy or MSE
  Var kl_sum;  // sum over channels of the batch-mean KL, nats
};

LossTerms loss_classification(Var logits, std::span<const std::size_t> targets, std::span<const Var> kl,
                              double beta);
LossTerms loss_regression(Var prediction, const Tensor& targets, std::span<const Var> kl, double beta);

}  // namespace dib
