#include <doctest.h>

#include <cmath>

#include "dib/core/gaussian.hpp"
#include "dib/core/rng.hpp"
#include "dib/errors.hpp"
#include "oracles.hpp"

using namespace dib;

namespace {

DiagonalGaussian random_gaussian(Rng& rng, std::size_t d, double spread = 2.0) {
  std::vector<double> mu(d), lv(d);
  for (std::size_t i = 0; i < d; ++i) {
    mu[i] = rng.uniform(-spread, spread);
    lv[i] = rng.uniform(-spread, spread);
  }
  return {mu, lv};
}

}  // namespace

TEST_CASE("KL to the prior is zero at the prior and matches sampling elsewhere") {
  CHECK(kl_to_standard_normal(DiagonalGaussian::standard(5)) == 0.0);
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const DiagonalGaussian g = random_gaussian(rng, 1 + rng.below(6));
    const double mc = oracle::kl_monte_carlo(g.mean(), g.log_variance(), 200000, 100 + trial);
    CHECK(kl_to_standard_normal(g) == doctest::Approx(mc).epsilon(0.01));
  }
}

TEST_CASE("KL is non-negative") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) CHECK(kl_to_standard_normal(random_gaussian(rng, 4, 5.0)) >= 0.0);
}

TEST_CASE("Bhattacharyya coefficient matches quadrature") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const DiagonalGaussian a = random_gaussian(rng, 1 + rng.below(3));
    DiagonalGaussian b = random_gaussian(rng, a.dim());
    const double quad = oracle::bhattacharyya_quadrature(a.mean(), a.log_variance(), b.mean(), b.log_variance());
    CHECK(std::abs(bhattacharyya_coefficient(a, b) - quad) < 1e-6);
  }
}

TEST_CASE("Bhattacharyya coefficient is symmetric, bounded, and exactly one on the diagonal") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const DiagonalGaussian a = random_gaussian(rng, 8, 10.0);
    const DiagonalGaussian b = random_gaussian(rng, 8, 10.0);
    const double ab = bhattacharyya_coefficient(a, b);
    CHECK(ab == bhattacharyya_coefficient(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(bhattacharyya_coefficient(a, a) == 1.0);
  }
}

TEST_CASE("far-apart unit Gaussians are distinguishable") {
  const DiagonalGaussian a({0.0, 0.0}, {0.0, 0.0});
  const DiagonalGaussian b({10.0, 10.0}, {0.0, 0.0});
  CHECK(bhattacharyya_coefficient(a, b) == doctest::Approx(std::exp(-25.0)));
  CHECK_THROWS_AS(bhattacharyya_coefficient(a, DiagonalGaussian::standard(3)), DimensionError);
}

TEST_CASE("log-variance is clamped on construction") {
  const DiagonalGaussian g({0.0, 0.0}, {-50.0, 50.0});
  CHECK(g.log_variance()[0] == kLogVarianceMin);
  CHECK(g.log_variance()[1] == kLogVarianceMax);
  CHECK(std::isfinite(kl_to_standard_normal(g)));
  CHECK_THROWS_AS(DiagonalGaussian({0.0}, {0.0, 1.0}), DimensionError);
}

TEST_CASE("reparameterization shifts and scales noise") {
  const DiagonalGaussian g({1.0, -2.0}, {std::log(4.0), 0.0});
  const std::vector<double> eps{0.5, -1.0};
  const auto u = reparameterize(g, eps);
  CHECK(u[0] == doctest::Approx(2.0));
  CHECK(u[1] == doctest::Approx(-3.0));
}

TEST_CASE("single-row losses") {
  const std::vector<double> logits{2.0, -1.0, 0.5};
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(softmax_cross_entropy(logits, t) == doctest::Approx(oracle::naive_cross_entropy(logits, t)).epsilon(1e-13));
  }
  const std::vector<double> p{1.0, 2.0}, q{1.0, 4.0};
  CHECK(mse(p, q) == 2.0);
  CHECK(mse(p, p) == 0.0);
}
