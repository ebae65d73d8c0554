#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "cbfmeta/error.hpp"
#include "cbfmeta/gp_baseline.hpp"

namespace cbfmeta {
namespace {

Eigen::MatrixXd random_inputs(std::mt19937_64& rng, int n, double half_width = 1.0) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  Eigen::MatrixXd X(2, n);
  for (int i = 0; i < n; ++i) X.col(i) = Vec2(u(rng), u(rng));
  return X;
}

double se_kernel(const Vec2& a, const Vec2& b, const GpHyper& h) {
  return h.signal_var * std::exp(-0.5 * (a - b).squaredNorm() / (h.length_scale * h.length_scale));
}

TEST(GpFit, SmoothTargetsGetLongerLengthScale) {
  std::mt19937_64 rng(1);
  const auto X = random_inputs(rng, 120);
  Eigen::VectorXd smooth(120), noise(120);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 120; ++i) {
    smooth(i) = std::sin(0.8 * X(0, i)) + 0.5 * std::cos(0.6 * X(1, i));
    noise(i) = 0.05 * n01(rng);
  }
  const auto a = gp_fit(X, smooth);
  const auto b = gp_fit(X, noise);
  EXPECT_GE(a.hyper().length_scale, 4.0 * b.hyper().length_scale)
      << a.hyper().length_scale << " vs " << b.hyper().length_scale;
}

TEST(GpFit, DuplicatePointsPinNoiseToLowerBound) {
  std::mt19937_64 rng(2);
  const auto base = random_inputs(rng, 20);
  Eigen::MatrixXd X(2, 40);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 20; ++i) {
    X.col(i) = base.col(i);
    X.col(20 + i) = base.col(i);
    y(i) = y(20 + i) = std::sin(2.0 * base(0, i)) * base(1, i);
  }
  GpSearchConfig cfg;
  const auto m = gp_fit(X, y, cfg);
  EXPECT_NEAR(std::log(m.hyper().noise_var), std::log(cfg.noise_var.lo), 0.5);
}

TEST(GpFit, OptimumBeatsRandomProbes) {
  std::mt19937_64 rng(3);
  const auto X = random_inputs(rng, 80);
  Eigen::VectorXd y(80);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 80; ++i) y(i) = std::hypot(X(0, i) - 0.2, X(1, i)) - 0.5 + 0.01 * n01(rng);
  GpSearchConfig cfg;
  const auto m = gp_fit(X, y, cfg);
  const double best = m.log_marginal_likelihood();
  EXPECT_NEAR(best, gp_log_marginal_likelihood(X, y, m.hyper()), 1e-9 * std::abs(best));
  auto log_uniform = [&](const Interval& iv) {
    std::uniform_real_distribution<double> u(std::log(iv.lo), std::log(iv.hi));
    return std::exp(u(rng));
  };
  for (int k = 0; k < 100; ++k) {
    const GpHyper h{log_uniform(cfg.signal_var), log_uniform(cfg.length_scale), log_uniform(cfg.noise_var)};
    EXPECT_GE(best, gp_log_marginal_likelihood(X, y, h)) << "probe " << k;
  }
}

TEST(GpPredict, InterpolatesWithTinyNoise) {
  std::mt19937_64 rng(4);
  const auto X = random_inputs(rng, 10);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) y(i) = X(0, i) - 2.0 * X(1, i);
  const GpModel m(X, y, {1.0, 0.4, 1e-10});
  for (int i = 0; i < 10; ++i) {
    const auto p = m.predict(X.col(i));
    EXPECT_NEAR(p.mean, y(i), 1e-5);
    EXPECT_LT(p.variance, 1e-6);
  }
}

TEST(GpPredict, FarFieldRevertsToPrior) {
  std::mt19937_64 rng(5);
  const auto X = random_inputs(rng, 15);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(15);
  const GpModel m(X, y, {2.5, 0.3, 1e-4});
  const auto p = m.predict(Vec2(50.0, -40.0));
  EXPECT_NEAR(p.variance, 2.5, 1e-12);
  EXPECT_NEAR(p.mean, 0.0, 1e-12);
  EXPECT_NEAR(p.lower, -2.0 * std::sqrt(2.5), 1e-12);
}

TEST(GpPredict, MatchesDenseInverse) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 5; ++trial) {
    const auto X = random_inputs(rng, 50);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) y(i) = n01(rng);
    const GpHyper h{0.5 + trial * 0.3, 0.2 + 0.1 * trial, 1e-3};
    const GpModel m(X, y, h);
    Eigen::MatrixXd K(50, 50);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) K(i, j) = se_kernel(X.col(i), X.col(j), h) + (i == j ? h.noise_var : 0.0);
    const Eigen::MatrixXd Kinv = K.inverse();
    for (int k = 0; k < 20; ++k) {
      const Vec2 z = random_inputs(rng, 1, 1.3).col(0);
      Eigen::VectorXd kz(50);
      for (int i = 0; i < 50; ++i) kz(i) = se_kernel(z, X.col(i), h);
      const double mean = kz.dot(Kinv * y);
      const double var = h.signal_var - kz.dot(Kinv * kz);
      const auto p = gp_predict_bounds(m, z);
      EXPECT_NEAR(p.mean, mean, 1e-8);
      EXPECT_NEAR(p.variance, var, 1e-8);
      EXPECT_LE(p.lower, p.mean);
      EXPECT_GE(p.variance, 0.0);
    }
  }
}

TEST(GpPredict, LowerBoundGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const auto X = random_inputs(rng, 30);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) y(i) = X.col(i).norm() - 0.4;
  const GpModel m(X, y, {1.0, 0.35, 1e-4});
  const double h = 1e-6;
  for (int k = 0; k < 50; ++k) {
    const Vec2 z = random_inputs(rng, 1, 1.5).col(0);
    const auto p = m.predict(z);
    for (int d = 0; d < 2; ++d) {
      Vec2 e = Vec2::Zero();
      e(d) = h;
      const double fd_lower = (m.predict(z + e).lower - m.predict(z - e).lower) / (2.0 * h);
      const double fd_mean = (m.predict(z + e).mean - m.predict(z - e).mean) / (2.0 * h);
      EXPECT_NEAR(p.lower_gradient(d), fd_lower, 1e-4 * std::max(1.0, std::abs(fd_lower)));
      EXPECT_NEAR(p.mean_gradient(d), fd_mean, 1e-4 * std::max(1.0, std::abs(fd_mean)));
    }
  }
}

TEST(GpPredict, AddingPointNeverRaisesVariance) {
  std::mt19937_64 rng(8);
  const auto X = random_inputs(rng, 25);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(25);
  const GpHyper h{1.0, 0.3, 1e-4};
  const GpModel small(X.leftCols(24), y.head(24), h);
  const GpModel big(X, y, h);
  for (int k = 0; k < 200; ++k) {
    const Vec2 z = random_inputs(rng, 1, 1.5).col(0);
    EXPECT_LE(big.predict(z).variance, small.predict(z).variance + 1e-10);
  }
}

TEST(GpFit, EvenSubsample) {
  EXPECT_EQ(even_subsample(5, 10).size(), 5u);
  const auto idx = even_subsample(1000, 400);
  EXPECT_EQ(idx.size(), 400u);
  EXPECT_EQ(idx.front(), 0u);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
}

TEST(GpFit, RejectsBadSearchConfig) {
  GpSearchConfig cfg;
  cfg.noise_var = {1e-2, 1e-8};
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace cbfmeta
