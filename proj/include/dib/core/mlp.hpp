#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dib/core/rng.hpp"
#include "dib/core/tape.hpp"

namespace dib {

// Fully connected layer; weight is [in, out], bias is [out].
struct DenseLayer {
  ParamId weight;
  ParamId bias;
  std::size_t in = 0;
  std::size_t out = 0;
};

struct Mlp {
  std::vector<DenseLayer> layers;

  std::size_t input_width() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_width() const { return layers.empty() ? 0 : layers.back().out; }
};

struct MlpOptions {
  double leaky_alpha = 0.2;
  double dropout_rate = 0.0;
  bool train = false;
};

// Registers "<prefix>.<k>.weight" / "<prefix>.<k>.bias" in `params`. Weights are
// drawn uniformly from +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
Mlp make_mlp(ParameterSet& params, std::string_view prefix, std::size_t input_width,
             std::span<const std::size_t> hidden, std::size_t output_width, Rng& rng);

// Leaky ReLU after every hidden layer, followed by dropout in train mode; the
// last layer is linear. `rng` is only drawn from when dropout is active.
Var mlp_apply(const ParameterSet& params, const Mlp& mlp, Var input, const MlpOptions& options,
              Rng* rng);

Tensor mlp_apply(const ParameterSet& params, const Mlp& mlp, const Tensor& input,
                 const MlpOptions& options, Rng* rng);

}  // namespace dib
