#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "kpstream/gaussian.hpp"

using namespace kpstream;

namespace {

DiagGaussian g1(double mean, double var) { return {Vector::Constant(1, mean), Vector::Constant(1, std::log(var))}; }

double log_density(const Vector& x, const DiagGaussian& g) { return -gaussian_nll(x, g); }

}  // namespace

TEST(Reparameterize, ZeroEpsGivesMean) {
  DiagGaussian g{Vector::LinSpaced(4, -1, 2), Vector::Constant(4, 0.7)};
  EXPECT_EQ(reparameterize(g, Vector::Zero(4)), g.mean);
}

TEST(Reparameterize, StandardGaussianPassesEpsThrough) {
  const Vector e = Vector::LinSpaced(3, -2, 5);
  EXPECT_EQ(reparameterize(DiagGaussian::standard(3), e), e);
}

TEST(Reparameterize, HandComputedTwoDim) {
  DiagGaussian g{Vector2(1, 2), Vector2(2 * std::log(0.5), 2 * std::log(2.0))};
  const Vector out = reparameterize(g, Vector2(1, -1));
  EXPECT_NEAR(out(0), 1.5, 1e-15);
  EXPECT_NEAR(out(1), 0.0, 1e-15);
}

TEST(Reparameterize, DimensionMismatch) {
  EXPECT_THROW(reparameterize(DiagGaussian::standard(3), Vector::Zero(2)), ShapeError);
}

TEST(Reparameterize, SampleMomentsMatch) {
  const int N = 100000;
  DiagGaussian g{Vector2(0.3, -1.2), Vector2(std::log(0.25), std::log(4.0))};
  Rng rng(17);
  const Matrix eps = standard_normal(rng, 2, N);
  const Matrix z = reparameterize(g.mean.replicate(1, N), g.log_var.replicate(1, N), eps);
  const Vector mean = z.rowwise().mean();
  const Vector var = (z.colwise() - mean).array().square().rowwise().mean();
  for (int i = 0; i < 2; ++i) {
    const double sigma = g.stddev()(i);
    EXPECT_LT(std::abs(mean(i) - g.mean(i)), 3 * sigma / std::sqrt(N));
    EXPECT_LT(std::abs(var(i) / g.variance()(i) - 1.0), 0.05);
  }
}

TEST(Kl, IdenticalIsZero) {
  DiagGaussian q{Vector::LinSpaced(5, -1, 1), Vector::LinSpaced(5, -2, 2)};
  EXPECT_EQ(gaussian_kl(q, q), 0.0);
}

TEST(Kl, UnitShift) { EXPECT_NEAR(gaussian_kl(g1(1, 1), g1(0, 1)), 0.5, 1e-12); }

TEST(Kl, VarianceFour) {
  EXPECT_NEAR(gaussian_kl(g1(0, 4), g1(0, 1)), 0.5 * (4 - 1 - std::log(4.0)), 1e-15);
  EXPECT_NEAR(gaussian_kl(g1(0, 4), g1(0, 1)), 0.806853, 1e-6);
}

TEST(Kl, NonNegativeOnRandomPairs) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int n = 0; n < 1000; ++n) {
    DiagGaussian q{Vector(3), Vector(3)}, p{Vector(3), Vector(3)};
    for (int i = 0; i < 3; ++i) {
      q.mean(i) = u(rng);
      q.log_var(i) = u(rng);
      p.mean(i) = u(rng);
      p.log_var(i) = u(rng);
    }
    EXPECT_GE(gaussian_kl(q, p), 0.0);
  }
}

TEST(Kl, MatchesMonteCarlo) {
  const int N = 1000000;
  for (int dim = 1; dim <= 4; ++dim) {
    DiagGaussian q{Vector::LinSpaced(dim, -0.5, 0.8), Vector::LinSpaced(dim, -0.6, 0.4)};
    DiagGaussian p{Vector::LinSpaced(dim, 0.2, -0.3), Vector::LinSpaced(dim, 0.3, -0.2)};
    Rng rng(100 + dim);
    const Matrix eps = standard_normal(rng, dim, N);
    double acc = 0.0;
    for (int s = 0; s < N; ++s) {
      const Vector z = reparameterize(q, eps.col(s));
      acc += log_density(z, q) - log_density(z, p);
    }
    EXPECT_NEAR(acc / N, gaussian_kl(q, p), 1e-2) << "dim " << dim;
  }
}

TEST(Kl, DimensionMismatch) {
  EXPECT_THROW(gaussian_kl(DiagGaussian::standard(2), DiagGaussian::standard(3)), ShapeError);
}

TEST(Nll, AtMeanUnitVariance) {
  EXPECT_NEAR(gaussian_nll(Vector::Zero(1), DiagGaussian::standard(1)), 0.918939, 1e-6);
  EXPECT_NEAR(gaussian_nll(Vector::Zero(1), DiagGaussian::standard(1)), 0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(gaussian_nll(Vector::Zero(60), DiagGaussian::standard(60)), 60 * 0.5 * std::log(2 * std::numbers::pi), 1e-12);
}

TEST(Nll, OneSigmaAway) {
  EXPECT_NEAR(gaussian_nll(Vector::Constant(1, 1.0), DiagGaussian::standard(1)), 1.418939, 1e-6);
}

TEST(Nll, AdditiveOverDimensions) {
  DiagGaussian g{Vector::LinSpaced(4, -1, 1), Vector::LinSpaced(4, -1, 0.5)};
  const Vector x = Vector::LinSpaced(4, 0.3, -0.9);
  double parts = 0.0;
  for (int i = 0; i < 4; ++i) parts += gaussian_nll(x.segment(i, 1), DiagGaussian{g.mean.segment(i, 1), g.log_var.segment(i, 1)});
  EXPECT_NEAR(gaussian_nll(x, g), parts, 1e-13);
}
