#include "dib/core/mlp.hpp"

#include <cmath>
#include <string>

#include "dib/errors.hpp"

namespace dib {

Mlp make_mlp(ParameterSet& params, std::string_view prefix, std::size_t input_width,
             std::span<const std::size_t> hidden, std::size_t output_width, Rng& rng) {
  if (input_width == 0 || output_width == 0) throw ConfigError("MLP widths must be positive");
  Mlp mlp;
  std::size_t in = input_width;
  auto add_layer = [&](std::size_t out) {
    if (out == 0) throw ConfigError("MLP widths must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w({in, out});
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    const std::string base = std::string(prefix) + "." + std::to_string(mlp.layers.size());
    DenseLayer layer;
    layer.weight = params.add(base + ".weight", std::move(w));
    layer.bias = params.add(base + ".bias", Tensor({out}, 0.0));
    layer.in = in;
    layer.out = out;
    mlp.layers.push_back(layer);
    in = out;
  };
  for (std::size_t h : hidden) add_layer(h);
  add_layer(output_width);
  return mlp;
}

Var mlp_apply(const ParameterSet& params, const Mlp& mlp, Var input, const MlpOptions& options,
              Rng* rng) {
  if (options.dropout_rate < 0.0 || options.dropout_rate >= 1.0) {
    throw ContractError("dropout rate must be in [0, 1)");
  }
  const bool use_dropout = options.train && options.dropout_rate > 0.0;
  if (use_dropout && rng == nullptr) throw ContractError("dropout requires a random source");
  Tape& tape = input.tape();
  Var x = input;
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    const DenseLayer& layer = mlp.layers[k];
    if (x.value().rank() != 2 || x.value().cols() != layer.in) {
      throw DimensionError("layer " + std::to_string(k) + " expects width " +
                           std::to_string(layer.in) + ", got input of shape " +
                           shape_string(x.value().shape()));
    }
    x = add_bias(matmul(x, tape.parameter(params, layer.weight)), tape.parameter(params, layer.bias));
    if (k + 1 < mlp.layers.size()) {
      x = leaky_relu(x, options.leaky_alpha);
      if (use_dropout) x = dropout(x, options.dropout_rate, *rng);
    }
  }
  return x;
}

Tensor mlp_apply(const ParameterSet& params, const Mlp& mlp, const Tensor& input,
                 const MlpOptions& options, Rng* rng) {
  Tape tape(false);
  return mlp_apply(params, mlp, tape.constant(input), options, rng).value();
}

}  // namespace dib
