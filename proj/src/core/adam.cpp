#include "dib/core/adam.hpp"

#include <cmath>

#include "dib/errors.hpp"

namespace dib {

AdamState AdamState::for_parameters(const ParameterSet& params, double learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params.value(ParamId{i}).shape();
    state.first_moment.emplace_back(shape, 0.0);
    state.second_moment.emplace_back(shape, 0.0);
  }
  return state;
}

void adam_step(AdamState& state, ParameterSet& params, const Gradients& grads) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: gradients, moments and parameters are not aligned");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamId id{i};
    if (!grads[id].same_shape(params.value(id))) {
      throw DimensionError("adam_step: gradient shape mismatch for '" + params.name(id) + "'");
    }
    if (!grads[id].all_finite()) {
      throw TrainingError("non-finite gradient for parameter '" + params.name(id) + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamId id{i};
    const Tensor& g = grads[id];
    Tensor& p = params.value(id);
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace dib
