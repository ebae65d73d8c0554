#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cbfmeta/bayes_blr.hpp"
#include "cbfmeta/checkpoint.hpp"
#include "cbfmeta/environment.hpp"
#include "cbfmeta/feature_net.hpp"
#include "cbfmeta/lidar.hpp"
#include "cbfmeta/surface_dataset.hpp"

namespace cbfmeta {

/// n poses evenly spaced on a circle, each facing the center.
std::vector<Pose2> ring_poses(const Vec2& center, double radius, int n);

/// Union of the offset datasets from one scan per pose, restricted to the
/// obstacle with index `obstacle`. Throws Error(EmptyTask) when no ray hits it.
SurfaceDataset build_task(const EnvironmentSpec& env, std::size_t obstacle, std::span<const Pose2> poses,
                          const LidarConfig& lidar, const OffsetConfig& offsets, std::mt19937_64& rng);

struct TaskConfig {
  DistributionParams distribution;
  LidarConfig lidar;
  OffsetConfig offsets;
  int n_poses = 8;
  double ring_radius = 2.0;
};

using TaskSampler = std::function<SurfaceDataset(std::mt19937_64&)>;

/// Samples one obstacle per task and scans it from a ring of poses.
TaskSampler obstacle_task_sampler(const TaskConfig& cfg);

/// Meta-learned quantities: feature net w, prior mean, and the factor L of
/// the prior precision L L^T + eps I.
struct MetaParams {
  FeatureNet net;
  Eigen::VectorXd prior_mean;
  Eigen::MatrixXd L;  // lower triangular
  double sigma = 0.001;
  double eps = 1e-6;

  Eigen::MatrixXd prior_precision() const;
  Posterior prior() const;
  ModelBundle bundle() const { return {net, prior()}; }
};

/// One task split into an adaptation set and an evaluation set.
struct TaskSplit {
  std::vector<SurfaceSample> train;
  std::vector<SurfaceSample> test;
};

struct MetaLossResult {
  double loss = 0.0;
  Eigen::VectorXd grad_w;
  Eigen::VectorXd grad_mean;
  Eigen::MatrixXd grad_L;  // lower triangular
};

/// sum over tasks and test points of ln Sigma + r^2 / Sigma, plus
/// gamma * Tr(P^T P) * Tr(P0^T P0) per task, where P and P0 are the posterior
/// and prior precision inverses. Gradients are exact (hand-derived adjoints).
MetaLossResult meta_loss(const MetaParams& params, std::span<const TaskSplit> tasks, double gamma,
                         bool with_gradient = true, bool feature_gradient = true);

struct MetaConfig {
  int n_iterations = 2000;
  int tasks_per_iteration = 4;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double gamma = 1e-9;
  double sigma = 0.001;
  double lambda0_eps = 1e-6;
  double init_precision = 1e-2;      // initial L = sqrt(init_precision) I
  std::size_t max_task_points = 200; // random subsample per task before the split
  bool train_features = true;
  int probe_tasks = 10;
  int probe_every = 100;
  double probe_delta = 0.025;
  std::uint64_t seed = 0;
  NetSpec net;

  static constexpr int kFullIterations = 30000;
  static constexpr int kDeskIterations = 2000;

  void validate() const;
};

struct MetaLogRow {
  int iteration = 0;
  double loss = 0.0;
  double mean_beta = 0.0;
  bool has_beta = false;
};

struct MetaResult {
  MetaParams params;
  std::vector<MetaLogRow> log;
};

MetaParams initial_meta_params(const MetaConfig& cfg);

/// Random subsample of at most max_points samples, then a uniform split with
/// n_train drawn from {1, ..., n}.
TaskSplit split_task(const SurfaceDataset& task, std::size_t max_points, std::mt19937_64& rng);

/// Mean confidence radius after adapting on each probe task.
double mean_probe_beta(const MetaParams& params, std::span<const SurfaceDataset> probes, double delta);

/// Adam on (w, prior mean, L). Throws Error(NonFiniteLoss) with the iteration
/// number when the loss or a gradient stops being finite.
MetaResult meta_train(const MetaConfig& cfg, const TaskSampler& sampler);
MetaResult meta_train(const MetaConfig& cfg, const TaskSampler& sampler, MetaParams init);

/// CSV with header `iteration,loss,mean_beta`; mean_beta is empty on rows
/// without a probe.
std::string meta_log_to_csv(std::span<const MetaLogRow> log);

}  // namespace cbfmeta
