#include <doctest.h>

#include <cmath>
#include <limits>

#include "dib/core/adam.hpp"
#include "dib/core/mlp.hpp"
#include "dib/errors.hpp"
#include "oracles.hpp"

using namespace dib;

TEST_CASE("MLP registers named parameters with Glorot-bounded weights and zero biases") {
  ParameterSet params;
  Rng rng(1);
  const std::vector<std::size_t> hidden{5, 7};
  const Mlp mlp = make_mlp(params, "enc", 3, hidden, 4, rng);
  CHECK(mlp.layers.size() == 3);
  CHECK(mlp.input_width() == 3);
  CHECK(mlp.output_width() == 4);
  REQUIRE(params.find("enc.1.weight"));
  const Tensor& w = params.value(*params.find("enc.1.weight"));
  CHECK(w.shape() == Tensor::Shape{5, 7});
  const double limit = std::sqrt(6.0 / 12.0);
  for (double v : w.values()) CHECK(std::abs(v) <= limit);
  CHECK(params.value(*params.find("enc.2.bias")) == Tensor({4}, 0.0));
  CHECK(params.scalar_count() == 3 * 5 + 5 + 5 * 7 + 7 + 7 * 4 + 4);
}

TEST_CASE("MLP forward matches a hand computation") {
  ParameterSet params;
  Rng rng(2);
  const std::vector<std::size_t> hidden{2};
  const Mlp mlp = make_mlp(params, "m", 2, hidden, 1, rng);
  params.value(mlp.layers[0].weight) = Tensor::matrix(2, 2, {1.0, -1.0, 2.0, 0.5});
  params.value(mlp.layers[0].bias) = Tensor::vector({0.0, -3.0});
  params.value(mlp.layers[1].weight) = Tensor::matrix(2, 1, {1.0, 1.0});
  params.value(mlp.layers[1].bias) = Tensor::vector({0.25});
  // Input (1, 1): hidden pre-activations (3, -3.5) -> leaky (3, -0.7).
  const Tensor out = mlp_apply(params, mlp, Tensor::matrix(1, 2, {1.0, 1.0}), MlpOptions{}, nullptr);
  CHECK(out.item() == doctest::Approx(3.0 - 0.7 + 0.25));
  CHECK_THROWS_AS(mlp_apply(params, mlp, Tensor::matrix(1, 3, {1, 2, 3}), MlpOptions{}, nullptr), DimensionError);
}

TEST_CASE("MLP gradients match finite differences") {
  ParameterSet params;
  Rng rng(3);
  const std::vector<std::size_t> hidden{6, 6};
  const Mlp mlp = make_mlp(params, "m", 3, hidden, 2, rng);
  Tensor x({4, 3});
  for (double& v : x.values()) v = rng.normal();
  auto loss = [&](Gradients* g) {
    Tape tape(g != nullptr);
    Var l = sum(square(mlp_apply(params, mlp, tape.constant(x), MlpOptions{}, nullptr)));
    if (g) *g = tape.backward(l, params);
    return l.value().item();
  };
  Gradients analytic;
  loss(&analytic);
  const auto numeric = oracle::numeric_gradient(params, [&] { return loss(nullptr); });
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t k = 0; k < numeric[p].size(); ++k) {
      CHECK(oracle::relative_error(analytic[ParamId{p}][k], numeric[p][k]) < 1e-5);
    }
  }
}

TEST_CASE("Adam first steps follow the bias-corrected update") {
  ParameterSet params;
  params.add("p", Tensor::vector({1.0, -2.0}));
  AdamState state = AdamState::for_parameters(params, 0.1);
  Gradients g(params);
  g[ParamId{0}] = Tensor::vector({0.5, -4.0});
  adam_step(state, params, g);
  // With bias correction the first step is lr * g / (|g| + eps) per coordinate.
  CHECK(params.value(ParamId{0})[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(params.value(ParamId{0})[1] == doctest::Approx(-2.0 + 0.1 * 4.0 / (4.0 + 1e-8)));

  // Second step, reference by the textbook recursion.
  g[ParamId{0}] = Tensor::vector({1.0, 1.0});
  const double m0 = 0.1 * 0.5 * 0.9 + 0.1 * 1.0;
  const double v0 = 0.001 * 0.25 * 0.999 + 0.001 * 1.0;
  const double expected = params.value(ParamId{0})[0] -
                          0.1 * (m0 / (1 - 0.81)) / (std::sqrt(v0 / (1 - 0.999 * 0.999)) + 1e-8);
  adam_step(state, params, g);
  CHECK(params.value(ParamId{0})[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(state.step == 2);
}

TEST_CASE("Adam refuses non-finite gradients without touching parameters") {
  ParameterSet params;
  params.add("a", Tensor::vector({1.0}));
  params.add("b", Tensor::vector({2.0}));
  AdamState state = AdamState::for_parameters(params, 0.1);
  Gradients g(params);
  g[ParamId{0}] = Tensor::vector({1.0});
  g[ParamId{1}] = Tensor::vector({std::numeric_limits<double>::infinity()});
  const ParameterSet before = params;
  CHECK_THROWS_AS(adam_step(state, params, g), TrainingError);
  CHECK(params == before);
  CHECK(state.step == 0);
}
