#include "dib/model/dib_model.hpp"

#include <algorithm>

#include "dib/errors.hpp"

namespace dib {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;

}  // namespace

// ---- ModelConfig -------------------------------------------------------------

ModelConfig ModelConfig::for_table(const DatasetTable& table, const ModelConfig& base) {
  ModelConfig config = base;
  config.feature_names.clear();
  config.input_widths.clear();
  for (const auto& f : table.features) {
    config.feature_names.push_back(f.display_name);
    config.input_widths.push_back(f.encoded_width());
  }
  config.task = table.task();
  config.output_width = table.target.output_width();
  return config;
}

ModelConfig ModelConfig::for_table(const DatasetTable& table) { return for_table(table, ModelConfig{}); }

void ModelConfig::validate() const {
  if (input_widths.empty()) throw ConfigError("model needs at least one feature");
  if (feature_names.size() != input_widths.size()) {
    throw ConfigError("model feature names and input widths differ in length");
  }
  if (std::find(input_widths.begin(), input_widths.end(), 0) != input_widths.end()) {
    throw ConfigError("feature input widths must be positive");
  }
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (output_width == 0) throw ConfigError("output width must be positive");
  if (task == TaskKind::regression && output_width != 1) {
    throw ConfigError("regression head must have width 1");
  }
  if (!(leaky_alpha >= 0.0)) throw ConfigError("leaky_relu_alpha must be non-negative");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"feature_names", feature_names},
          {"input_widths", input_widths},
          {"embedding_dim", embedding_dim},
          {"encoder_hidden", encoder_hidden},
          {"decoder_hidden", decoder_hidden},
          {"output_width", output_width},
          {"task", to_string(task)},
          {"leaky_relu_alpha", leaky_alpha},
          {"fused", fused}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
  ModelConfig c;
  try {
    c.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    c.input_widths = doc.at("input_widths").get<std::vector<std::size_t>>();
    c.embedding_dim = doc.at("embedding_dim").get<std::size_t>();
    c.encoder_hidden = doc.at("encoder_hidden").get<std::vector<std::size_t>>();
    c.decoder_hidden = doc.at("decoder_hidden").get<std::vector<std::size_t>>();
    c.output_width = doc.at("output_width").get<std::size_t>();
    c.task = parse_task_kind(doc.at("task").get<std::string>());
    c.leaky_alpha = doc.at("leaky_relu_alpha").get<double>();
    c.fused = doc.at("fused").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- DibModel ----------------------------------------------------------------

DibModel DibModel::create(ModelConfig config, std::uint64_t seed) {
  config.validate();
  DibModel model;
  model.config_ = std::move(config);
  Rng rng(seed, kInitStream);
  model.build(rng);
  return model;
}

DibModel DibModel::from_parameters(ModelConfig config, ParameterSet params) {
  DibModel model = create(std::move(config), 0);
  if (model.params_.size() != params.size()) {
    throw ConfigError("parameter count " + std::to_string(params.size()) + " does not match model (" +
                      std::to_string(model.params_.size()) + ")");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamId id{i};
    if (params.name(id) != model.params_.name(id) ||
        params.value(id).shape() != model.params_.value(id).shape()) {
      throw ConfigError("parameter '" + params.name(id) + "' does not match the model structure");
    }
  }
  model.params_ = std::move(params);
  return model;
}

void DibModel::build(Rng& rng) {
  const std::size_t d = config_.embedding_dim;
  if (config_.fused) {
    std::size_t total = 0;
    for (std::size_t w : config_.input_widths) total += w;
    encoders_.push_back(make_mlp(params_, "encoder.fused", total, config_.encoder_hidden, 2 * d, rng));
  } else {
    for (std::size_t i = 0; i < config_.input_widths.size(); ++i) {
      encoders_.push_back(make_mlp(params_, "encoder." + std::to_string(i), config_.input_widths[i],
                                   config_.encoder_hidden, 2 * d, rng));
    }
  }
  decoder_ = make_mlp(params_, "decoder", d * encoders_.size(), config_.decoder_hidden,
                      config_.output_width, rng);
}

ChannelOutput DibModel::encode(std::size_t channel, Var input, const ForwardOptions& options,
                               Rng* rng) const {
  const std::size_t d = config_.embedding_dim;
  const MlpOptions mlp_options{config_.leaky_alpha, options.dropout_rate, options.train};
  Var out = mlp_apply(params_, encoders_.at(channel), input, mlp_options, rng);
  ChannelOutput result;
  result.mean = slice_cols(out, 0, d);
  result.log_variance = clamp(slice_cols(out, d, 2 * d), kLogVarianceMin, kLogVarianceMax);
  return result;
}

ForwardResult DibModel::forward(Tape& tape, std::span<const Tensor> inputs, const ForwardOptions& options,
                                Rng* rng) const {
  if (inputs.size() != config_.input_widths.size()) {
    throw DimensionError("forward: expected " + std::to_string(config_.input_widths.size()) +
                         " feature inputs, got " + std::to_string(inputs.size()));
  }
  if (options.train && rng == nullptr) throw ContractError("train-mode forward needs a random source");
  const std::size_t rows = inputs.front().rows();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].rank() != 2 || inputs[i].rows() != rows || inputs[i].cols() != config_.input_widths[i]) {
      throw DimensionError("forward: feature " + std::to_string(i) + " input has shape " +
                           shape_string(inputs[i].shape()) + ", expected [" + std::to_string(rows) +
                           ", " + std::to_string(config_.input_widths[i]) + "]");
    }
  }

  std::vector<Var> channel_inputs;
  if (config_.fused) {
    std::vector<Var> parts;
    for (const Tensor& t : inputs) parts.push_back(tape.constant(t));
    channel_inputs.push_back(parts.size() == 1 ? parts.front() : concat_cols(parts));
  } else {
    for (const Tensor& t : inputs) channel_inputs.push_back(tape.constant(t));
  }

  ForwardResult result;
  std::vector<Var> codes;
  for (std::size_t c = 0; c < channel_inputs.size(); ++c) {
    ChannelOutput ch = encode(c, channel_inputs[c], options, rng);
    result.kl.push_back(kl_standard_normal(ch.mean, ch.log_variance));
    if (options.train) {
      Tensor eps(ch.mean.value().shape());
      for (double& e : eps.values()) e = rng->normal();
      codes.push_back(reparameterize(ch.mean, ch.log_variance, eps));
    } else {
      codes.push_back(ch.mean);
    }
  }
  Var joint = codes.size() == 1 ? codes.front() : concat_cols(codes);
  const MlpOptions decoder_options{config_.leaky_alpha, options.dropout_rate, options.train};
  result.prediction = mlp_apply(params_, decoder_, joint, decoder_options, rng);
  return result;
}

std::vector<DiagonalGaussian> DibModel::encode_feature(std::size_t channel, const Tensor& encoded) const {
  if (channel >= encoders_.size()) throw ContractError("encode_feature: channel out of range");
  if (encoded.rank() != 2 || encoded.cols() != encoders_[channel].input_width()) {
    throw DimensionError("encode_feature: channel " + std::to_string(channel) + " expects width " +
                         std::to_string(encoders_[channel].input_width()) + ", got shape " +
                         shape_string(encoded.shape()));
  }
  Tape tape(false);
  const ChannelOutput out = encode(channel, tape.constant(encoded), ForwardOptions{}, nullptr);
  const std::size_t d = config_.embedding_dim;
  const Tensor& mu = out.mean.value();
  const Tensor& lv = out.log_variance.value();
  std::vector<DiagonalGaussian> result;
  result.reserve(encoded.rows());
  for (std::size_t r = 0; r < encoded.rows(); ++r) {
    result.emplace_back(std::vector<double>(mu.data() + r * d, mu.data() + (r + 1) * d),
                        std::vector<double>(lv.data() + r * d, lv.data() + (r + 1) * d));
  }
  return result;
}

DiagonalGaussian DibModel::encode_feature(std::size_t channel, std::span<const double> encoded_value) const {
  return encode_feature(channel, Tensor::matrix(1, encoded_value.size(),
                                                std::vector<double>(encoded_value.begin(), encoded_value.end())))
      .front();
}

// ---- losses ------------------------------------------------------------------

namespace {

Var kl_batch_sum(std::span<const Var> kl, Var like) {
  if (kl.empty()) return like.tape().constant(Tensor::scalar(0.0));
  Var total = mean(kl.front());
  for (std::size_t i = 1; i < kl.size(); ++i) total = add(total, mean(kl[i]));
  return total;
}

LossTerms combine(Var error, std::span<const Var> kl, double beta) {
  if (!(beta >= 0.0)) throw ContractError("beta must be non-negative");
  LossTerms terms;
  terms.error = error;
  terms.kl_sum = kl_batch_sum(kl, error);
  terms.total = add(error, scale(terms.kl_sum, beta));
  return terms;
}

}  // namespace

LossTerms loss_classification(Var logits, std::span<const std::size_t> targets, std::span<const Var> kl,
                              double beta) {
  return combine(mean(softmax_cross_entropy(logits, targets)), kl, beta);
}

LossTerms loss_regression(Var prediction, const Tensor& targets, std::span<const Var> kl, double beta) {
  return combine(mse(prediction, targets), kl, beta);
}

}  // namespace dib
