#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cbfmeta/barrier_model.hpp"
#include "cbfmeta/checkpoint.hpp"
#include "cbfmeta/data_buffer.hpp"
#include "cbfmeta/environment.hpp"
#include "cbfmeta/gp_baseline.hpp"
#include "cbfmeta/lidar.hpp"
#include "cbfmeta/qp_solver.hpp"
#include "cbfmeta/surface_dataset.hpp"

namespace cbfmeta {

/// Off-axis point (qx, qy) at distance ell ahead of the axle, and heading.
struct RobotState {
  double qx = 0.0;
  double qy = 0.0;
  double theta = 0.0;  // wrapped to (-pi, pi]

  Vec2 position() const { return {qx, qy}; }
  Eigen::Vector3d vec() const { return {qx, qy, theta}; }
};

double wrap_angle(double a);

/// Input matrix g(x) of the off-axis unicycle (3 x 2); the drift is zero.
Eigen::Matrix<double, 3, 2> unicycle_input_matrix(double theta, double ell);

/// Classical RK4 over dt with u = (v, omega) held constant.
RobotState dynamics_step(const RobotState& x, const Eigen::Vector2d& u, double dt, double ell = 0.1);

enum class Backend { Meta, Gp };
std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);

struct EpisodeConfig {
  double dt = 0.02;
  double T = 30.0;
  double lidar_period = 5.0;
  double cse_period = 0.02;
  RobotState start{-2.5, 0.0, 0.0};
  Vec2 goal{2.5, 0.0};
  double ell = 0.1;
  double delta = 0.025;
  double gamma_c = 1.0;
  double gamma_v = 1.0;
  double lambda = 10.0;
  double v_max = 1.0;
  double omega_max = 2.0;
  Backend backend = Backend::Meta;
  BufferConfig buffer;
  OffsetConfig offsets;
  GpSearchConfig gp;
  std::uint64_t seed = 0;  // LiDAR noise

  int steps() const;
  int lidar_stride() const;
  int cse_stride() const;
  void validate() const;
};

struct StepRecord {
  double t = 0.0;
  RobotState x;
  Eigen::Vector2d u = Eigen::Vector2d::Zero();
  double eps = 0.0;
  QPStatus status = QPStatus::Solved;
  bool fallback = false;  // u = 0 applied because the QP failed
  std::vector<std::optional<double>> hb;  // per obstacle, empty until detected
  std::vector<double> true_sd;
  std::vector<std::size_t> buffer_rows;
  std::vector<char> segment_safe;  // the current model's first h^b was >= 0
};

struct EpisodeLog {
  std::vector<StepRecord> steps;
  RobotState final_state;
  double final_distance = 0.0;
  double cse = 0.0;
  int cse_stride = 1;
  int violation_steps = 0;          // true distance < 0 to a detected obstacle
  int undetected_violation_steps = 0;
  int infeasible_steps = 0;
  int cbf_updates = 0;
  int mean_only_gradient_steps = 0;
  bool aborted = false;
  std::string abort_reason;
  double kappa = 0.0;               // max |h^b(x_{k+1}) - h^b(x_k)| / dt under a fixed model
  int invariant_checked_steps = 0;
  int invariant_failures = 0;       // h^b < -kappa dt while the segment started safe
  int invariant_skipped_segments = 0;
  std::vector<double> final_beta;   // per obstacle, NaN when undetected or GP
  double scan_seconds = 0.0;
  double update_seconds = 0.0;
  double qp_seconds = 0.0;
};

struct EpisodeResult {
  EpisodeLog log;
  std::vector<std::shared_ptr<const BarrierModel>> barriers;  // final models, null if undetected
};

/// Runs one closed-loop episode. The meta backend needs `bundle`.
EpisodeResult run_episode(const EnvironmentSpec& env, const ModelBundle* bundle, const EpisodeConfig& cfg,
                          const LidarConfig& lidar);

/// Sum of squared goal distances over rows sampled every cse_stride steps.
double cumulative_squared_error(const EpisodeLog& log, const Vec2& goal);

std::string episode_to_csv(const EpisodeLog& log);
/// JSON summary: CSE, violation and infeasible counts, invariant check, timing.
std::string episode_summary_json(const EpisodeLog& log);

struct GridSpec {
  Box2 region{Vec2(-3.0, -3.0), Vec2(3.0, 3.0)};
  int nx = 61;
  int ny = 61;
};

/// CSV `x,y,obstacle_id,hb,mean,true_sd` over a regular grid for every
/// detected obstacle.
std::string hb_grid_to_csv(const EnvironmentSpec& env, const std::vector<std::shared_ptr<const BarrierModel>>& barriers,
                           const GridSpec& grid);

}  // namespace cbfmeta
