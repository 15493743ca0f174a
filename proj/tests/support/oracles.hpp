#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the library's closed forms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "dib/core/tape.hpp"

namespace oracle {

// Central finite differences of `f` with respect to every scalar in `params`.
inline std::vector<std::vector<double>> numeric_gradient(dib::ParameterSet& params, const std::function<double()>& f,
                                                         double rel_step = 1e-5) {
  std::vector<std::vector<double>> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    dib::Tensor& t = params.value(dib::ParamId{p});
    std::vector<double> g(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double saved = t[k];
      const double h = rel_step * std::max(1.0, std::abs(saved));
      t[k] = saved + h;
      const double up = f();
      t[k] = saved - h;
      const double down = f();
      t[k] = saved;
      g[k] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline double relative_error(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Softmax cross entropy in extended precision without any shifting trick.
inline double naive_cross_entropy(std::span<const double> logits, std::size_t target) {
  long double z = 0.0L;
  for (double v : logits) z += std::exp(static_cast<long double>(v));
  return static_cast<double>(std::log(z) - static_cast<long double>(logits[target]));
}

// Monte Carlo estimate of KL(N(mu, diag(exp(lv))) || N(0, I)) in nats, using
// antithetic pairs of the log density ratio.
inline double kl_monte_carlo(std::span<const double> mu, std::span<const double> lv, std::size_t pairs,
                             std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  const std::size_t d = mu.size();
  std::vector<double> eps(d);
  double acc = 0.0;
  for (std::size_t s = 0; s < pairs; ++s) {
    for (double& e : eps) e = normal(gen);
    for (double sign : {1.0, -1.0}) {
      double log_q = 0.0, log_r = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double sd = std::exp(0.5 * lv[i]);
        const double u = mu[i] + sd * sign * eps[i];
        log_q += -0.5 * eps[i] * eps[i] - std::log(sd);
        log_r += -0.5 * u * u;
      }
      acc += log_q - log_r;
    }
  }
  return acc / static_cast<double>(2 * pairs);
}

inline double normal_density(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

// Trapezoid integral of sqrt(p q) for two 1-D Gaussians.
inline double bhattacharyya_quadrature_1d(double m1, double lv1, double m2, double lv2, std::size_t n = 400000) {
  const double s1 = std::exp(0.5 * lv1), s2 = std::exp(0.5 * lv2);
  const double lo = std::min(m1 - 14 * s1, m2 - 14 * s2);
  const double hi = std::max(m1 + 14 * s1, m2 + 14 * s2);
  const double dx = (hi - lo) / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = lo + dx * static_cast<double>(i);
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    acc += w * std::sqrt(normal_density(x, m1, s1) * normal_density(x, m2, s2));
  }
  return acc * dx;
}

// Product over dimensions of the 1-D quadrature (diagonal Gaussians factorize).
inline double bhattacharyya_quadrature(std::span<const double> m1, std::span<const double> lv1,
                                       std::span<const double> m2, std::span<const double> lv2) {
  double bc = 1.0;
  for (std::size_t i = 0; i < m1.size(); ++i) bc *= bhattacharyya_quadrature_1d(m1[i], lv1[i], m2[i], lv2[i]);
  return bc;
}

// AUC as the fraction of (positive, negative) pairs ordered correctly, ties
// counted as one half.
inline double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Entropy in bits by direct summation.
inline double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v) / std::log(2.0);
  }
  return h;
}

}  // namespace oracle
