#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "cbfmeta/lidar.hpp"

namespace cbfmeta {
namespace {

EnvironmentSpec single(const Obstacle& o) {
  EnvironmentSpec env;
  env.obstacles.push_back(o);
  return env;
}

TEST(Lidar, CollinearCircle) {
  const auto env = single(Obstacle::ellipse({{0.5, 0.5}, {2.0, 0.0}, 0.0}));
  const auto hit = ray_intersect(env, {0.0, 0.0}, {1.0, 0.0});
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->range, 1.5, 1e-12);
  EXPECT_EQ(hit->obstacle_id, 0u);
}

TEST(Lidar, EmptyEnvironment) {
  EXPECT_FALSE(ray_intersect(EnvironmentSpec{}, {0.0, 0.0}, {0.3, 0.4}));
}

TEST(Lidar, NearestObstacleWins) {
  EnvironmentSpec env;
  env.obstacles.push_back(Obstacle::ellipse({{0.5, 0.5}, {3.0, 0.0}, 0.0}));
  env.obstacles.push_back(Obstacle::ellipse({{0.3, 0.3}, {1.0, 0.0}, 0.0}));
  const auto hit = ray_intersect(env, {0.0, 0.0}, {1.0, 0.0});
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->obstacle_id, 1u);
  EXPECT_NEAR(hit->range, 0.7, 1e-12);
  EXPECT_FALSE(ray_intersect(env, {0.0, 0.0}, {1.0, 0.0}, 0.5));
}

// First sign change of the signed distance along the ray, refined by bisection.
std::optional<double> bisection_range(const EnvironmentSpec& env, const Vec2& o, const Vec2& d, double max_range) {
  const double step = 2e-3;  // well below the thinnest chord
  const bool start_inside = env.obstacles[0].contains(o);
  double prev = 0.0;
  for (double t = step; t <= max_range; t += step) {
    if (env.obstacles[0].contains(o + t * d) != start_inside) {
      double lo = prev, hi = t;
      for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (env.obstacles[0].contains(o + mid * d) != start_inside) hi = mid;
        else lo = mid;
      }
      return 0.5 * (lo + hi);
    }
    prev = t;
  }
  return std::nullopt;
}

TEST(Lidar, RotatedEllipseMatchesBisection) {
  const auto env = single(Obstacle::ellipse({{0.4, 0.8}, {0.2, -0.1}, 0.7}));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-3.0, 3.0), ang(0.0, 2.0 * std::numbers::pi);
  int hits = 0;
  for (int k = 0; k < 1000; ++k) {
    Vec2 o;
    do o = {pos(rng), pos(rng)};
    while (true_signed_distance(env, 0, o) < 0.05);
    const double a = ang(rng);
    const Vec2 d(std::cos(a), std::sin(a));
    const auto got = ray_intersect(env, o, d, 6.0);
    const auto want = bisection_range(env, o, d, 6.0);
    ASSERT_EQ(got.has_value(), want.has_value()) << "ray " << k;
    if (got) {
      EXPECT_NEAR(got->range, *want, 1e-4);
      ++hits;
    }
  }
  EXPECT_GT(hits, 100);
}

TEST(Lidar, NoiselessHitsOnCircle) {
  const auto env = single(Obstacle::ellipse({{0.5, 0.5}, {1.5, 0.3}, 0.0}));
  LidarConfig cfg;
  cfg.range_noise_std = 0.0;
  std::mt19937_64 rng(1);
  const auto scan = cast_scan(env, {{0.0, 0.0}, 0.3}, cfg, rng);
  ASSERT_FALSE(scan.hits.empty());
  for (const auto& h : scan.hits) EXPECT_NEAR((h.point - Vec2(1.5, 0.3)).norm(), 0.5, 1e-9);
  for (std::size_t i = 1; i < scan.hits.size(); ++i) EXPECT_LT(scan.hits[i - 1].angle, scan.hits[i].angle);
}

TEST(Lidar, OutOfRange) {
  const auto env = single(Obstacle::ellipse({{0.5, 0.5}, {5.0, 0.0}, 0.0}));
  std::mt19937_64 rng(1);
  EXPECT_TRUE(cast_scan(env, {}, LidarConfig{}, rng).hits.empty());
}

TEST(Lidar, RangeNoiseStatistics) {
  const auto env = single(Obstacle::polygon({{{2.0, -5.0}, {2.5, -5.0}, {2.5, 5.0}, {2.0, 5.0}}}));
  LidarConfig cfg;
  cfg.n_rays = 8;  // ray 0 points along +x at the wall
  std::mt19937_64 rng(123);
  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto scan = cast_scan(env, {}, cfg, rng);
    ASSERT_FALSE(scan.hits.empty());
    ASSERT_DOUBLE_EQ(scan.hits.front().angle, 0.0);
    const double r = scan.hits.front().range - 2.0;
    EXPECT_LE(std::abs(r), 5.0 * cfg.range_noise_std + 1e-12);
    sum += r;
    sum2 += r * r;
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
  EXPECT_GE(sd, 0.00095);
  EXPECT_LE(sd, 0.00105);
}

TEST(Lidar, SameSeedSameScan) {
  const auto env = single(Obstacle::ellipse({{0.5, 0.7}, {1.0, 0.5}, 0.3}));
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(scan_to_csv(cast_scan(env, {}, LidarConfig{}, a)), scan_to_csv(cast_scan(env, {}, LidarConfig{}, b)));
}

}  // namespace
}  // namespace cbfmeta
