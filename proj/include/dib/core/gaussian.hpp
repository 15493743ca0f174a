#pragma once

#include <span>
#include <vector>

namespace dib {

inline constexpr double kLogVarianceMin = -10.0;
inline constexpr double kLogVarianceMax = 10.0;

// Diagonal Gaussian over a d-dimensional channel. Log-variances are clamped
// to [kLogVarianceMin, kLogVarianceMax] on construction.
class DiagonalGaussian {
 public:
  DiagonalGaussian() = default;
  DiagonalGaussian(std::vector<double> mean, std::vector<double> log_variance);

  // The standard-normal prior r(u) in d dimensions.
  static DiagonalGaussian standard(std::size_t dim);

  std::size_t dim() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& log_variance() const noexcept { return log_variance_; }

  friend bool operator==(const DiagonalGaussian&, const DiagonalGaussian&) = default;

 private:
  std::vector<double> mean_;
  std::vector<double> log_variance_;
};

// u = mean + exp(0.5 * log_variance) * eps.
std::vector<double> reparameterize(const DiagonalGaussian& g, std::span<const double> eps);

// KL(g || N(0, I)) in nats.
double kl_to_standard_normal(const DiagonalGaussian& g);

// exp(-D_B) for the closed-form Bhattacharyya distance between two diagonal
// Gaussians. Symmetric in its arguments bit for bit; exactly 1 for g1 == g2.
double bhattacharyya_coefficient(const DiagonalGaussian& g1, const DiagonalGaussian& g2);

// Single-row losses, used outside of the tape (evaluation, oracles).
double softmax_cross_entropy(std::span<const double> logits, std::size_t target_class);
double mse(std::span<const double> pred, std::span<const double> target);

}  // namespace dib
