#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "cbfmeta/error.hpp"
#include "cbfmeta/meta_train.hpp"
#include "cbfmeta/sim_control.hpp"

namespace cbfmeta {
namespace {

TEST(Dynamics, ZeroInputKeepsState) {
  const RobotState x{0.3, -1.2, 2.0};
  const auto y = dynamics_step(x, Eigen::Vector2d::Zero(), 0.02);
  EXPECT_EQ(y.qx, x.qx);
  EXPECT_EQ(y.qy, x.qy);
  EXPECT_EQ(y.theta, x.theta);
}

TEST(Dynamics, StraightLineIsExact) {
  const auto y = dynamics_step({0.0, 0.0, 0.0}, Eigen::Vector2d(1.0, 0.0), 0.1);
  EXPECT_EQ(y.qx, 0.1);
  EXPECT_EQ(y.qy, 0.0);
  EXPECT_EQ(y.theta, 0.0);
}

TEST(Dynamics, PureRotationCirclesTheAxle) {
  // Axle at (qx - ell cos th, qy - ell sin th) stays put; q rotates rigidly about it.
  const double ell = 0.1;
  RobotState x{0.5, 0.2, 0.3};
  const Vec2 axle = x.position() - ell * Vec2(std::cos(x.theta), std::sin(x.theta));
  const double dt = 0.02;
  for (int k = 1; k <= 500; ++k) {
    x = dynamics_step(x, Eigen::Vector2d(0.0, 1.0), dt, ell);
    const double th = 0.3 + k * dt;
    const Vec2 expect = axle + ell * Vec2(std::cos(th), std::sin(th));
    ASSERT_LT((x.position() - expect).norm(), 1e-9) << "step " << k;
    ASSERT_NEAR(x.theta, wrap_angle(th), 1e-9);
  }
}

TEST(Dynamics, WrapAngleRange) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(7.0), 7.0 - 2.0 * std::numbers::pi, 1e-15);
}

ModelBundle untrained_bundle() {
  MetaConfig cfg;
  return initial_meta_params(cfg).bundle();
}

TEST(Episode, NoObstaclesReachesGoal) {
  EnvironmentSpec env;
  const auto bundle = untrained_bundle();
  EpisodeConfig cfg;
  const auto res = run_episode(env, &bundle, cfg, LidarConfig{});
  EXPECT_FALSE(res.log.aborted);
  EXPECT_LT(res.log.final_distance, 0.05);
  EXPECT_EQ(res.log.infeasible_steps, 0);
  EXPECT_EQ(res.log.steps.size(), static_cast<std::size_t>(cfg.steps() + 1));
}

TEST(Episode, MetaBackendNeedsBundle) {
  EpisodeConfig cfg;
  try {
    run_episode(EnvironmentSpec{}, nullptr, cfg, LidarConfig{});
    FAIL() << "expected ConfigInvalid";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
  }
}

TEST(Episode, RejectsLidarPeriodOffGrid) {
  EpisodeConfig cfg;
  cfg.lidar_period = 0.031;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Episode, SingleCircleStaysSafe) {
  MetaConfig mcfg;
  mcfg.n_iterations = 300;
  mcfg.seed = 3;
  const auto trained = meta_train(mcfg, obstacle_task_sampler(TaskConfig{}));
  const auto bundle = trained.params.bundle();

  EnvironmentSpec env;
  env.obstacles.push_back(Obstacle::ellipse({{0.5, 0.5}, {0.0, 0.05}, 0.0}));
  EpisodeConfig cfg;
  cfg.delta = 0.025;
  const auto res = run_episode(env, &bundle, cfg, LidarConfig{});
  ASSERT_FALSE(res.log.aborted) << res.log.abort_reason;
  double min_sd = std::numeric_limits<double>::infinity();
  for (const auto& r : res.log.steps) min_sd = std::min(min_sd, r.true_sd[0]);
  EXPECT_GE(min_sd, 0.0);
  EXPECT_EQ(res.log.violation_steps, 0);
  EXPECT_GT(res.log.cbf_updates, 0);
  EXPECT_EQ(res.log.invariant_failures, 0);
}

EpisodeLog stationary_log(const Vec2& p, int rows) {
  EpisodeLog log;
  for (int k = 0; k < rows; ++k) {
    StepRecord r;
    r.t = k * 0.02;
    r.x = {p.x(), p.y(), 0.0};
    log.steps.push_back(r);
  }
  return log;
}

TEST(Cse, ZeroAtGoal) {
  EXPECT_EQ(cumulative_squared_error(stationary_log({2.5, 0.0}, 51), {2.5, 0.0}), 0.0);
}

TEST(Cse, OneMetreForOneSecond) {
  // 1 s at dt = 0.02 is 50 control intervals plus the terminal row.
  EXPECT_DOUBLE_EQ(cumulative_squared_error(stationary_log({1.0, 0.0}, 51), {0.0, 0.0}), 50.0);
}

TEST(Cse, StrideSamplesEveryOtherRow) {
  auto log = stationary_log({0.0, 2.0}, 51);
  log.cse_stride = 2;
  EXPECT_DOUBLE_EQ(cumulative_squared_error(log, {0.0, 0.0}), 25.0 * 4.0);
}

TEST(Cse, ReplayFromCsvIsBitExact) {
  EnvironmentSpec env;
  const auto bundle = untrained_bundle();
  EpisodeConfig cfg;
  cfg.T = 5.0;
  const auto res = run_episode(env, &bundle, cfg, LidarConfig{});
  std::istringstream in(episode_to_csv(res.log));
  std::string line;
  std::getline(in, line);
  ASSERT_EQ(line.rfind("t,qx,qy,", 0), 0u);
  std::vector<Vec2> pos;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string t, qx, qy;
    std::getline(row, t, ',');
    std::getline(row, qx, ',');
    std::getline(row, qy, ',');
    pos.emplace_back(std::stod(qx), std::stod(qy));
  }
  ASSERT_EQ(pos.size(), res.log.steps.size());
  double sum = 0.0;
  for (std::size_t r = 0; r + 1 < pos.size(); ++r) sum += (pos[r] - cfg.goal).squaredNorm();
  EXPECT_EQ(sum, res.log.cse);
}

TEST(Episode, SameSeedSameLog) {
  EnvironmentSpec env;
  env.obstacles.push_back(Obstacle::ellipse({{0.4, 0.4}, {0.0, 0.3}, 0.0}));
  const auto bundle = untrained_bundle();
  EpisodeConfig cfg;
  cfg.T = 4.0;
  cfg.lidar_period = 1.0;
  cfg.seed = 9;
  const auto a = run_episode(env, &bundle, cfg, LidarConfig{});
  const auto b = run_episode(env, &bundle, cfg, LidarConfig{});
  EXPECT_EQ(episode_to_csv(a.log), episode_to_csv(b.log));
}

}  // namespace
}  // namespace cbfmeta
