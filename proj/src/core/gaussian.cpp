#include "dib/core/gaussian.hpp"

#include <algorithm>
#include <cmath>

#include "dib/errors.hpp"

namespace dib {

DiagonalGaussian::DiagonalGaussian(std::vector<double> mean, std::vector<double> log_variance)
    : mean_(std::move(mean)), log_variance_(std::move(log_variance)) {
  if (mean_.size() != log_variance_.size()) {
    throw DimensionError("DiagonalGaussian: mean has " + std::to_string(mean_.size()) +
                         " entries, log_variance " + std::to_string(log_variance_.size()));
  }
  for (double& lv : log_variance_) lv = std::clamp(lv, kLogVarianceMin, kLogVarianceMax);
}

DiagonalGaussian DiagonalGaussian::standard(std::size_t dim) {
  return DiagonalGaussian(std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0));
}

std::vector<double> reparameterize(const DiagonalGaussian& g, std::span<const double> eps) {
  if (eps.size() != g.dim()) throw DimensionError("reparameterize: eps length != dimension");
  std::vector<double> u(g.dim());
  for (std::size_t j = 0; j < u.size(); ++j) {
    u[j] = g.mean()[j] + std::exp(0.5 * g.log_variance()[j]) * eps[j];
  }
  return u;
}

double kl_to_standard_normal(const DiagonalGaussian& g) {
  double acc = 0.0;
  for (std::size_t j = 0; j < g.dim(); ++j) {
    const double m = g.mean()[j], lv = g.log_variance()[j];
    acc += m * m + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * acc;
}

double bhattacharyya_coefficient(const DiagonalGaussian& g1, const DiagonalGaussian& g2) {
  if (g1.dim() != g2.dim()) throw DimensionError("bhattacharyya_coefficient: dimensions differ");
  double distance = 0.0;
  for (std::size_t j = 0; j < g1.dim(); ++j) {
    const double a = g1.log_variance()[j], b = g2.log_variance()[j];
    const double dm = g1.mean()[j] - g2.mean()[j];
    const double var_sum = std::exp(a) + std::exp(b);
    // 0.5 * ln((s1^2 + s2^2) / (2 s1 s2)) == 0.5 * ln cosh((a - b) / 2)
    distance += dm * dm / (4.0 * var_sum) + 0.5 * std::log(std::cosh(0.5 * std::abs(a - b)));
  }
  return std::exp(-distance);
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t target_class) {
  if (target_class >= logits.size()) {
    throw ContractError("softmax_cross_entropy: class index " + std::to_string(target_class) +
                        " >= class count " + std::to_string(logits.size()));
  }
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - shift);
  return std::log(total) - (logits[target_class] - shift);
}

double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DimensionError("mse: lengths differ");
  if (pred.empty()) throw ContractError("mse of empty inputs");
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double e = pred[k] - target[k];
    acc += e * e;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace dib
