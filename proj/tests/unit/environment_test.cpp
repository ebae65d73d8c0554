#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cbfmeta/environment.hpp"
#include "cbfmeta/error.hpp"

namespace cbfmeta {
namespace {

Vec2 ellipse_point(const Ellipse& e, double t) {
  const double u = e.semi_axes.x() * std::cos(t);
  const double w = e.semi_axes.y() * std::sin(t);
  const double c = std::cos(e.rotation), s = std::sin(e.rotation);
  return e.center + Vec2(u * c + w * s, u * s - w * c);
}

double sampled_distance(const Ellipse& e, const Vec2& z, int n) {
  double best = INFINITY;
  for (int i = 0; i < n; ++i) best = std::min(best, (ellipse_point(e, 2.0 * std::numbers::pi * i / n) - z).norm());
  return best;
}

TEST(Environment, NoObstacles) {
  const auto env = sample_environment(DistributionParams{}, 0, 7);
  EXPECT_TRUE(env.obstacles.empty());
}

TEST(Environment, SingleEllipseWithinRanges) {
  const DistributionParams p;
  const auto env = sample_environment(p, 1, 42);
  ASSERT_EQ(env.obstacles.size(), 1u);
  const auto& e = env.obstacles[0].as_ellipse();
  for (double a : {e.semi_axes.x(), e.semi_axes.y()}) {
    EXPECT_GE(a, p.semi_axis.lo);
    EXPECT_LE(a, p.semi_axis.hi);
  }
  for (double c : {e.center.x(), e.center.y()}) {
    EXPECT_GE(c, p.center.lo);
    EXPECT_LE(c, p.center.hi);
  }
  EXPECT_GE(e.rotation, p.rotation.lo);
  EXPECT_LE(e.rotation, p.rotation.hi);
}

TEST(Environment, ObstaclesAreDisjoint) {
  DistributionParams p;
  p.center = {-2.5, 2.5};
  const auto env = sample_environment(p, 3, 1);
  ASSERT_EQ(env.obstacles.size(), 3u);
  const int n = 10000;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      const auto& ea = env.obstacles[a].as_ellipse();
      const auto& eb = env.obstacles[b].as_ellipse();
      double best = INFINITY;
      for (int i = 0; i < n; ++i) {
        const Vec2 za = ellipse_point(ea, 2.0 * std::numbers::pi * i / n);
        EXPECT_FALSE(env.obstacles[b].contains(za));
        best = std::min(best, env.obstacles[b].boundary_distance(za));
      }
      for (int i = 0; i < n; i += 97) EXPECT_FALSE(env.obstacles[a].contains(ellipse_point(eb, 2.0 * std::numbers::pi * i / n)));
      EXPECT_GT(best, 0.0);
    }
  }
}

TEST(Environment, BudgetExceeded) {
  DistributionParams p;
  p.center = {0.0, 0.0};
  p.sampling_budget = 50;
  try {
    sample_environment(p, 2, 3);
    FAIL() << "expected SamplingBudgetExceeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SamplingBudgetExceeded);
  }
}

TEST(Environment, SignedDistanceCircle) {
  EnvironmentSpec env;
  env.obstacles.push_back(Obstacle::ellipse({{0.5, 0.5}, {0.0, 0.0}, 0.0}));
  EXPECT_NEAR(true_signed_distance(env, 0, {0.0, 0.0}), -0.5, 1e-5);
  EXPECT_NEAR(true_signed_distance(env, 0, {1.5, 0.0}), 1.0, 1e-5);
}

TEST(Environment, SignedDistanceRotatedEllipse) {
  const Ellipse e{{0.4, 0.8}, {0.0, 0.0}, std::numbers::pi / 4};
  EnvironmentSpec env;
  env.obstacles.push_back(Obstacle::ellipse(e));
  const Vec2 z(1.0, 1.0);
  EXPECT_NEAR(true_signed_distance(env, 0, z), sampled_distance(e, z, 1000000), 1e-3);
  const Vec2 inside(0.05, -0.1);
  EXPECT_NEAR(true_signed_distance(env, 0, inside), -sampled_distance(e, inside, 1000000), 1e-3);
}

TEST(Environment, LevelFunction) {
  const auto circle = Obstacle::ellipse({{0.5, 0.5}, {0.0, 0.0}, 0.0});
  EXPECT_DOUBLE_EQ(ellipse_level_value(circle, {0.0, 0.0}), -1.0);
  EXPECT_NEAR(ellipse_level_value(circle, {0.5, 0.0}), 0.0, 1e-15);
  const auto rotated = Obstacle::ellipse({{0.4, 0.8}, {0.0, 0.0}, std::numbers::pi / 2});
  EXPECT_NEAR(ellipse_level_value(rotated, {0.0, 0.4}), 0.0, 1e-12);
}

TEST(Environment, LevelFunctionRejectsPolygon) {
  const auto poly = Obstacle::polygon({{{0, 0}, {1, 0}, {1, 1}, {0, 1}}});
  try {
    ellipse_level_value(poly, {0.5, 0.5});
    FAIL() << "expected WrongKind";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WrongKind);
  }
}

TEST(Environment, PolygonSignedDistance) {
  EnvironmentSpec env;
  env.obstacles.push_back(Obstacle::polygon({{{0, 0}, {1, 0}, {1, 1}, {0, 1}}}));
  EXPECT_NEAR(true_signed_distance(env, 0, {0.5, 0.5}), -0.5, 1e-12);
  EXPECT_NEAR(true_signed_distance(env, 0, {2.0, 0.5}), 1.0, 1e-12);
  EXPECT_NEAR(true_signed_distance(env, 0, {2.0, 2.0}), std::sqrt(2.0), 1e-12);
}

TEST(Environment, JsonRoundTrip) {
  DistributionParams p;
  p.family = ShapeFamily::Mixed;
  p.center = {-2.5, 2.5};
  const auto env = sample_environment(p, 3, 11);
  const auto back = environment_from_json_string(to_json_string(env));
  ASSERT_EQ(back.obstacles.size(), env.obstacles.size());
  EXPECT_EQ(to_json_string(back), to_json_string(env));
  for (std::size_t i = 0; i < env.obstacles.size(); ++i) {
    EXPECT_EQ(back.obstacles[i].kind(), env.obstacles[i].kind());
    EXPECT_DOUBLE_EQ(true_signed_distance(back, i, {0.3, -0.2}), true_signed_distance(env, i, {0.3, -0.2}));
  }
}

TEST(Environment, SameSeedSameEnvironment) {
  DistributionParams p;
  p.center = {-2.0, 2.0};
  EXPECT_EQ(to_json_string(sample_environment(p, 2, 5)), to_json_string(sample_environment(p, 2, 5)));
}

}  // namespace
}  // namespace cbfmeta
