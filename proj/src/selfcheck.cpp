#include "dib/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "dib/core/gaussian.hpp"
#include "dib/errors.hpp"
#include "dib/io/checkpoint.hpp"
#include "dib/model/dib_model.hpp"
#include "dib/training/trainer.hpp"

namespace dib {

namespace {

constexpr double kGradTolerance = 1e-4;
// Gradients smaller than this are compared in absolute terms.
constexpr double kGradFloor = 1e-7;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

ModelConfig small_config(TaskKind task) {
  ModelConfig c;
  c.feature_names = {"a", "b"};
  c.input_widths = {3, 4};
  c.embedding_dim = 2;
  c.encoder_hidden = {8, 8};
  c.decoder_hidden = {16};
  c.task = task;
  c.output_width = task == TaskKind::regression ? 1 : 3;
  return c;
}

double loss_value(const DibModel& model, std::span<const Tensor> inputs, const std::vector<std::size_t>& classes,
                  const Tensor& targets, double beta, std::uint64_t noise_seed, Gradients* grads) {
  Tape tape(grads != nullptr);
  Rng rng(noise_seed, 7);
  const ForwardResult out = model.forward(tape, inputs, ForwardOptions{true, 0.0}, &rng);
  const LossTerms loss = model.config().task == TaskKind::regression
                             ? loss_regression(out.prediction, targets, out.kl, beta)
                             : loss_classification(out.prediction, classes, out.kl, beta);
  if (grads) *grads = tape.backward(loss.total, model.params());
  return loss.total.value().item();
}

CheckResult gradient_check(TaskKind task, std::uint64_t seed) {
  CheckResult r{std::string("gradient ") + (task == TaskKind::regression ? "regression" : "classification"), true, {}};
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    DibModel model = DibModel::create(small_config(task), seed + trial);
    Rng data(seed + trial, 99);
    const std::size_t rows = 6;
    std::vector<Tensor> inputs{Tensor({rows, 3}), Tensor({rows, 4}, 0.0)};
    for (double& v : inputs[0].values()) v = data.normal();
    for (std::size_t i = 0; i < rows; ++i) inputs[1].at(i, data.below(4)) = 1.0;
    std::vector<std::size_t> classes(rows);
    Tensor targets({rows, 1});
    for (std::size_t i = 0; i < rows; ++i) {
      classes[i] = data.below(3);
      targets[i] = data.normal();
    }
    const double beta = 0.3;
    Gradients analytic;
    loss_value(model, inputs, classes, targets, beta, seed + trial, &analytic);
    for (std::size_t p = 0; p < model.params().size(); ++p) {
      Tensor& value = model.params().value(ParamId{p});
      for (std::size_t k = 0; k < value.size(); ++k) {
        const double saved = value[k];
        const double h = 1e-5 * std::max(1.0, std::abs(saved));
        value[k] = saved + h;
        const double up = loss_value(model, inputs, classes, targets, beta, seed + trial, nullptr);
        value[k] = saved - h;
        const double down = loss_value(model, inputs, classes, targets, beta, seed + trial, nullptr);
        value[k] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[ParamId{p}][k];
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradFloor});
        worst = std::max(worst, err);
      }
    }
  }
  r.passed = worst <= kGradTolerance;
  r.detail = "max relative error " + fmt(worst);
  return r;
}

CheckResult kl_check(std::uint64_t seed) {
  CheckResult r{"kl closed form vs sampling", true, {}};
  Rng rng(seed, 11);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> mu(3), lv(3);
    for (std::size_t i = 0; i < 3; ++i) {
      mu[i] = rng.uniform(-1.5, 1.5);
      lv[i] = rng.uniform(-1.5, 1.5);
    }
    const DiagonalGaussian g(mu, lv);
    const double exact = kl_to_standard_normal(g);
    // E_q[log q(u) - log r(u)] with antithetic pairs.
    const std::size_t n = 100000;
    double acc = 0.0;
    std::vector<double> eps(3);
    for (std::size_t s = 0; s < n; ++s) {
      for (double& e : eps) e = rng.normal();
      for (double sign : {1.0, -1.0}) {
        double term = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
          const double u = mu[i] + std::exp(0.5 * lv[i]) * sign * eps[i];
          term += -0.5 * lv[i] - 0.5 * eps[i] * eps[i] + 0.5 * u * u;
        }
        acc += term;
      }
    }
    const double estimate = acc / static_cast<double>(2 * n);
    worst = std::max(worst, std::abs(estimate - exact) / std::max(exact, 1e-3));
  }
  r.passed = worst < 0.01;
  r.detail = "max relative deviation " + fmt(worst);
  return r;
}

CheckResult bhattacharyya_check(std::uint64_t seed) {
  CheckResult r{"bhattacharyya closed form vs quadrature", true, {}};
  Rng rng(seed, 13);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const double m1 = rng.uniform(-2, 2), m2 = rng.uniform(-2, 2);
    const double l1 = rng.uniform(-2, 2), l2 = rng.uniform(-2, 2);
    const double exact = bhattacharyya_coefficient(DiagonalGaussian({m1}, {l1}), DiagonalGaussian({m2}, {l2}));
    const double s1 = std::exp(0.5 * l1), s2 = std::exp(0.5 * l2);
    const double lo = std::min(m1 - 12 * s1, m2 - 12 * s2), hi = std::max(m1 + 12 * s1, m2 + 12 * s2);
    const std::size_t n = 200000;
    const double dx = (hi - lo) / static_cast<double>(n);
    auto density = [](double x, double m, double s) {
      const double z = (x - m) / s;
      return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
    };
    double acc = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      const double x = lo + dx * static_cast<double>(i);
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      acc += w * std::sqrt(density(x, m1, s1) * density(x, m2, s2));
    }
    worst = std::max(worst, std::abs(acc * dx - exact));
  }
  r.passed = worst < 1e-6;
  r.detail = "max absolute deviation " + fmt(worst);
  return r;
}

CheckResult schedule_check() {
  CheckResult r{"beta schedule endpoints", true, {}};
  TrainConfig c;
  const double start = beta_schedule(0, c);
  const double end = beta_schedule(c.total_steps(), c);
  r.passed = start == 2e-5 && end == 2.0;
  r.detail = "start " + fmt(start) + ", end " + fmt(end);
  return r;
}

CheckResult checkpoint_check(std::uint64_t seed) {
  CheckResult r{"checkpoint round trip", true, {}};
  const DibModel model = DibModel::create(small_config(TaskKind::classification), seed);
  const auto path = std::filesystem::temp_directory_path() /
                    ("dib_selfcheck_" + std::to_string(seed) + "_" + std::to_string(::getpid()) + ".ckpt");
  try {
    save_checkpoint(path, model, {{"check", true}});
    const Checkpoint back = load_checkpoint(path);
    r.passed = back.model.params() == model.params() && back.metadata.value("check", false);
  } catch (const Error& e) {
    r.passed = false;
    r.detail = e.what();
  }
  std::error_code ec;
  std::filesystem::remove(path, ec);
  if (r.detail.empty()) r.detail = r.passed ? "weights identical" : "weights differ";
  return r;
}

}  // namespace

std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
  return {gradient_check(TaskKind::classification, seed), gradient_check(TaskKind::regression, seed),
          kl_check(seed), bhattacharyya_check(seed), schedule_check(), checkpoint_check(seed)};
}

}  // namespace dib
