#pragma once

#include <cstdint>
#include <vector>

#include "dib/core/tape.hpp"

namespace dib {

struct AdamState {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState for_parameters(const ParameterSet& params, double learning_rate);
};

// Bias-corrected Adam update, in place. Throws TrainingError naming the
// parameter when a gradient is not finite; nothing is modified in that case.
void adam_step(AdamState& state, ParameterSet& params, const Gradients& grads);

}  // namespace dib
