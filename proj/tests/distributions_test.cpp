#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rpolab/distributions.hpp"

using namespace rpolab;

namespace {

DistParams one_dim(Family f, double loc, double scale) {
  return DistParams{f, Eigen::VectorXd::Constant(1, loc), Eigen::VectorXd::Constant(1, scale)};
}

const Family kFamilies[] = {Family::Gaussian, Family::Laplace, Family::Gumbel};

}  // namespace

TEST(Sample, GaussianTinyScaleIsLocation) {
  std::mt19937_64 rng(1);
  const auto p = one_dim(Family::Gaussian, 0.7, 1e-12);
  EXPECT_NEAR(sample(p, rng)[0], 0.7, 1e-9);
}

TEST(Sample, GaussianMoments) {
  std::mt19937_64 rng(2);
  const auto p = one_dim(Family::Gaussian, 0.0, 1.0);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = sample(p, rng)[0];
    s += a;
    s2 += a * a;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(s2 / n - mean * mean, 1.0, 0.05);
}

TEST(Sample, GumbelMeanIsEulerGamma) {
  std::mt19937_64 rng(3);
  const auto p = one_dim(Family::Gumbel, 0.0, 1.0);
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) s += sample(p, rng)[0];
  EXPECT_NEAR(s / 100000, 0.5772156649, 0.02);
}

TEST(Sample, LaplaceVarianceIsTwoBSquared) {
  std::mt19937_64 rng(4);
  const auto p = one_dim(Family::Laplace, 1.0, 0.5);
  double s = 0.0, s2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double a = sample(p, rng)[0];
    s += a;
    s2 += a * a;
  }
  EXPECT_NEAR(s / n, 1.0, 0.01);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 0.5, 0.02);
}

TEST(Sample, DeterministicGivenRngState) {
  DistParams p{Family::Laplace, Eigen::Vector3d(0, 1, 2), Eigen::Vector3d(1, 2, 3)};
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(sample(p, a), sample(p, b));
}

TEST(LogProb, ModeValues) {
  EXPECT_NEAR(log_prob(one_dim(Family::Gaussian, 0, 1), Eigen::VectorXd::Zero(1)).sum,
              -0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(log_prob(one_dim(Family::Gaussian, 0, 1), Eigen::VectorXd::Zero(1)).sum, -0.918939,
              1e-6);
  EXPECT_NEAR(log_prob(one_dim(Family::Laplace, 0, 1), Eigen::VectorXd::Zero(1)).sum, -0.693147,
              1e-6);
  EXPECT_DOUBLE_EQ(log_prob(one_dim(Family::Gumbel, 0, 1), Eigen::VectorXd::Zero(1)).sum, -1.0);
}

TEST(LogProb, SumsOverDimensions) {
  DistParams p{Family::Gaussian, Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 2)};
  const auto lp = log_prob(p, Eigen::Vector2d(0.5, -1));
  EXPECT_DOUBLE_EQ(lp.sum, lp.per_dim[0] + lp.per_dim[1]);
}

TEST(Entropy, ClosedForms) {
  EXPECT_NEAR(entropy(one_dim(Family::Gaussian, 3, 1)), 1.418939, 1e-6);
  EXPECT_NEAR(entropy(one_dim(Family::Laplace, -2, 1)), 1.693147, 1e-6);
  EXPECT_NEAR(entropy(one_dim(Family::Gumbel, 0, 1)), 1.577216, 1e-6);
}

TEST(Normalization, QuadratureIntegratesToOne) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> loc(-2, 2), scale(0.2, 2.0);
  for (Family f : kFamilies) {
    for (int trial = 0; trial < 5; ++trial) {
      const double mu = loc(rng), s = scale(rng);
      auto pdf = [&](double a) { return std::exp(log_density(f, mu, s, a)); };
      double lo = mu - 60 * s, hi = mu + 60 * s;
      // Gumbel's left tail is doubly exponential; the right one is long.
      if (f == Family::Gumbel) lo = mu - 8 * s;
      // Split at the Laplace kink so Simpson sees smooth pieces.
      const double total = oracle::simpson(pdf, lo, mu, 200000) + oracle::simpson(pdf, mu, hi, 200000);
      EXPECT_NEAR(total, 1.0, 1e-6) << to_string(f);
    }
  }
}

TEST(Entropy, MatchesMonteCarloWithinThreeStandardErrors) {
  std::mt19937_64 rng(6);
  const int n = 1000000;
  for (Family f : kFamilies) {
    const auto p = one_dim(f, 0.3, 0.8);
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double nl = -log_prob(p, sample(p, rng)).sum;
      s += nl;
      s2 += nl * nl;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_LT(std::abs(mean - entropy(p)), 3 * se) << to_string(f);
  }
}

TEST(LogProbGrad, GaussianExamples) {
  EXPECT_EQ(log_prob_grad(one_dim(Family::Gaussian, 0.4, 2.0), Eigen::VectorXd::Constant(1, 0.4)).d_loc[0], 0.0);
  EXPECT_DOUBLE_EQ(log_prob_grad(one_dim(Family::Gaussian, 0, 1), Eigen::VectorXd::Constant(1, 2)).d_loc[0], 2.0);
}

TEST(LogProbGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2, 2), s(0.3, 2.0);
  for (Family f : kFamilies) {
    for (int trial = 0; trial < 50; ++trial) {
      const double mu = u(rng), sc = s(rng);
      double a = u(rng);
      if (f == Family::Laplace && std::abs(a - mu) < 1e-3) a += 0.01;  // keep off the kink
      const auto g = log_prob_grad(one_dim(f, mu, sc), Eigen::VectorXd::Constant(1, a));
      auto by_loc = [&](const Eigen::VectorXd& v) { return log_density(f, v[0], sc, a); };
      auto by_scale = [&](const Eigen::VectorXd& v) { return log_density(f, mu, v[0], a); };
      const double fd_loc = oracle::central_diff(by_loc, Eigen::VectorXd::Constant(1, mu), 0, 1e-6);
      const double fd_sc = oracle::central_diff(by_scale, Eigen::VectorXd::Constant(1, sc), 0, 1e-6);
      EXPECT_LT(oracle::rel_err(g.d_loc[0], fd_loc, 1e-3), 1e-5) << to_string(f);
      EXPECT_LT(oracle::rel_err(g.d_scale[0], fd_sc, 1e-3), 1e-5) << to_string(f);
    }
  }
}

TEST(PerturbLoc, ZeroAlphaIsIdentity) {
  std::mt19937_64 rng(8);
  DistParams p{Family::Gaussian, Eigen::Vector2d(0.3, -1), Eigen::Vector2d(1, 2)};
  const auto q = perturb_loc(p, {0.0}, rng);
  EXPECT_EQ(q.loc, p.loc);
  EXPECT_EQ(q.scale, p.scale);
  std::mt19937_64 fresh(8);
  EXPECT_EQ(rng(), fresh());  // no draws consumed
}

TEST(PerturbLoc, StaysInsideSupportAndKeepsScaleAndFamily) {
  std::mt19937_64 rng(9);
  DistParams p{Family::Laplace, Eigen::Vector3d(0.3, -1, 5), Eigen::Vector3d(1, 2, 3)};
  for (int i = 0; i < 10000; ++i) {
    const auto q = perturb_loc(p, {0.5}, rng);
    EXPECT_LE((q.loc - p.loc).cwiseAbs().maxCoeff(), 0.5);
    EXPECT_EQ(q.scale, p.scale);
    EXPECT_EQ(q.family, p.family);
  }
}

TEST(PerturbLoc, UniformMoments) {
  std::mt19937_64 rng(10);
  const auto p = one_dim(Family::Gaussian, 2.0, 1.0);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = perturb_loc(p, {0.5}, rng).loc[0] - 2.0;
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 0.0, 0.005);
  EXPECT_NEAR(s2 / n - mean * mean, 0.25 / 3.0, 0.005);
}

TEST(PerturbLoc, DimensionsDrawIndependently) {
  std::mt19937_64 rng(11);
  DistParams p{Family::Gaussian, Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones()};
  int differ = 0;
  for (int i = 0; i < 100; ++i) {
    const auto q = perturb_loc(p, {1.0}, rng);
    differ += q.loc[0] != q.loc[1];
  }
  EXPECT_EQ(differ, 100);
}

TEST(PerturbLoc, EntropyIsUnchanged) {
  std::mt19937_64 rng(12);
  for (Family f : kFamilies) {
    DistParams p{f, Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(0.5, 1.7)};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(entropy(perturb_loc(p, {3.0}, rng)), entropy(p));
  }
}

TEST(EffectiveDensity, CenterValueMatchesQuadratureCdf) {
  const double phi3 = oracle::phi_by_quadrature(3.0);
  EXPECT_NEAR(phi3, 0.998650, 1e-6);
  const double expected = (2.0 * phi3 - 1.0) / 6.0;
  EXPECT_NEAR(effective_density_gaussian_uniform(0.4, 1.0, 3.0, 0.4), expected, 1e-9);
  EXPECT_NEAR(effective_density_gaussian_uniform(0.4, 1.0, 3.0, 0.4), 0.166217, 1e-6);
}

TEST(EffectiveDensity, TinyAlphaApproachesGaussian) {
  for (double a : {-1.0, 0.0, 0.3, 2.0}) {
    const double z = (a - 0.2) / 0.7;
    const double gauss = std::exp(-0.5 * z * z) / (0.7 * std::sqrt(2 * std::numbers::pi));
    EXPECT_NEAR(effective_density_gaussian_uniform(0.2, 0.7, 1e-8, a), gauss, 1e-6);
  }
}

TEST(EffectiveDensity, IntegratesToOne) {
  for (auto [mu, sigma, alpha] : std::vector<std::tuple<double, double, double>>{
           {0, 1, 3}, {1.5, 0.3, 0.5}, {-2, 2, 0.1}}) {
    auto f = [&](double a) { return effective_density_gaussian_uniform(mu, sigma, alpha, a); };
    const double total = oracle::simpson(f, mu - 10 * sigma - alpha, mu + 10 * sigma + alpha, 200000);
    EXPECT_NEAR(total, 1.0, 1e-8);
  }
}

TEST(EffectiveDensity, MarginalEntropyExceedsGaussian) {
  for (double sigma : {0.3, 1.0}) {
    for (double alpha : {0.1, 0.5, 3.0}) {
      auto f = [&](double a) {
        const double p = effective_density_gaussian_uniform(0, sigma, alpha, a);
        return p > 0 ? -p * std::log(p) : 0.0;
      };
      const double h = oracle::simpson(f, -alpha - 12 * sigma, alpha + 12 * sigma, 200000);
      EXPECT_GT(h, entropy_1d(Family::Gaussian, sigma));
      EXPECT_NEAR(marginal_entropy_gaussian_uniform(sigma, alpha), h, 1e-6);
    }
  }
}

// Perturb, then sample; compare a histogram with the closed-form marginal at
// 20 points spaced by quantile.
TEST(EffectiveDensity, MatchesPerturbThenSampleHistogram) {
  std::mt19937_64 rng(13);
  const double mu = 0.0, sigma = 1.0, alpha = 3.0;
  const auto p = one_dim(Family::Gaussian, mu, sigma);
  const int n = 1000000;
  std::vector<double> draws(n);
  for (auto& d : draws) d = sample(perturb_loc(p, {alpha}, rng), rng)[0];
  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  const double w = 0.1;
  int failures = 0;
  for (int k = 0; k < 20; ++k) {
    const double x = sorted[static_cast<std::size_t>((k + 0.5) / 20.0 * n)];
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), x - w / 2);
    const auto hi = std::lower_bound(sorted.begin(), sorted.end(), x + w / 2);
    const double frac = static_cast<double>(hi - lo) / n;
    const double est = frac / w;
    const double se = std::sqrt(frac * (1 - frac) / n) / w;
    // Bin average of the exact density.
    auto f = [&](double a) { return effective_density_gaussian_uniform(mu, sigma, alpha, a); };
    const double exact = oracle::simpson(f, x - w / 2, x + w / 2, 200) / w;
    failures += std::abs(est - exact) > 4 * se;
  }
  EXPECT_EQ(failures, 0);
}

TEST(Params, Validity) {
  EXPECT_TRUE(one_dim(Family::Gaussian, 0, 1).valid());
  EXPECT_FALSE(one_dim(Family::Gaussian, 0, 0).valid());
  EXPECT_FALSE(one_dim(Family::Gaussian, NAN, 1).valid());
  DistParams bad{Family::Gaussian, Eigen::Vector2d::Zero(), Eigen::VectorXd::Ones(1)};
  EXPECT_FALSE(bad.valid());
  EXPECT_THROW(parse_family("cauchy"), std::invalid_argument);
}
