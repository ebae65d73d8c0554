#include "cbfmeta/meta_train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

#include "cbfmeta/error.hpp"
#include "cbfmeta/format.hpp"

namespace cbfmeta {

std::vector<Pose2> ring_poses(const Vec2& center, double radius, int n) {
  std::vector<Pose2> poses;
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * std::numbers::pi * k / n;
    poses.push_back({center + radius * Vec2(std::cos(a), std::sin(a)), a + std::numbers::pi});
  }
  return poses;
}

SurfaceDataset build_task(const EnvironmentSpec& env, std::size_t obstacle, std::span<const Pose2> poses,
                          const LidarConfig& lidar, const OffsetConfig& offsets, std::mt19937_64& rng) {
  if (obstacle >= env.obstacles.size()) throw Error(ErrorCode::DomainError, "task obstacle index out of range");
  SurfaceDataset task;
  for (const auto& pose : poses) {
    const Scan scan = cast_scan(env, pose, lidar, rng);
    append_dataset(task, filter_obstacle(build_offset_dataset(scan, offsets), obstacle));
  }
  if (task.empty()) throw Error(ErrorCode::EmptyTask, "no ray hit the task obstacle");
  return task;
}

TaskSampler obstacle_task_sampler(const TaskConfig& cfg) {
  return [cfg](std::mt19937_64& rng) {
    EnvironmentSpec env;
    env.world_bounds = cfg.distribution.world_bounds;
    env.obstacles.push_back(sample_obstacle(cfg.distribution, rng));
    const auto poses = ring_poses(env.obstacles[0].centroid(), cfg.ring_radius, cfg.n_poses);
    return build_task(env, 0, poses, cfg.lidar, cfg.offsets, rng);
  };
}

Eigen::MatrixXd MetaParams::prior_precision() const {
  const auto d = L.rows();
  return L * L.transpose() + eps * Eigen::MatrixXd::Identity(d, d);
}

Posterior MetaParams::prior() const {
  Eigen::MatrixXd P = prior_precision();
  P = 0.5 * (P + P.transpose());
  return Posterior(prior_mean, P, sigma);
}

MetaLossResult meta_loss(const MetaParams& params, std::span<const TaskSplit> tasks, double gamma,
                         bool with_gradient, bool feature_gradient) {
  const int d = params.net.output_dim();
  const double s2 = params.sigma * params.sigma;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd Lam0 = params.prior_precision();
  Eigen::LLT<Eigen::MatrixXd> llt0(Lam0);
  if (llt0.info() != Eigen::Success) throw Error(ErrorCode::NumericalBreakdown, "prior precision is not SPD");
  const Eigen::MatrixXd P0 = llt0.solve(I);
  const double T0 = P0.squaredNorm();

  MetaLossResult out;
  Eigen::MatrixXd gLam0 = Eigen::MatrixXd::Zero(d, d);
  out.grad_mean = Eigen::VectorXd::Zero(d);
  if (with_gradient && feature_gradient) out.grad_w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.net.parameter_count()));

  for (const auto& task : tasks) {
    const auto ntr = static_cast<Eigen::Index>(task.train.size());
    const auto nts = static_cast<Eigen::Index>(task.test.size());
    Eigen::MatrixXd Z(2, ntr + nts);
    for (Eigen::Index i = 0; i < ntr; ++i) Z.col(i) = task.train[static_cast<std::size_t>(i)].z;
    for (Eigen::Index i = 0; i < nts; ++i) Z.col(ntr + i) = task.test[static_cast<std::size_t>(i)].z;
    const ForwardCache cache = params.net.forward_cached(Z);
    const Eigen::MatrixXd& F = cache.output();  // d x N
    const Eigen::MatrixXd Phi = F.leftCols(ntr).transpose();
    const Eigen::MatrixXd Phits = F.rightCols(nts).transpose();
    Eigen::VectorXd G(ntr);
    for (Eigen::Index i = 0; i < ntr; ++i) G(i) = task.train[static_cast<std::size_t>(i)].label;
    Eigen::VectorXd Y(nts);
    for (Eigen::Index i = 0; i < nts; ++i) Y(i) = task.test[static_cast<std::size_t>(i)].label;

    const Eigen::MatrixXd Lam = Phi.transpose() * Phi + Lam0;
    const Eigen::VectorXd b = Phi.transpose() * G + Lam0 * params.prior_mean;
    Eigen::LLT<Eigen::MatrixXd> llt(Lam);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::NumericalBreakdown, "task posterior precision is not SPD");
    const Eigen::MatrixXd P = llt.solve(I);
    const Eigen::VectorXd theta = llt.solve(b);
    const Eigen::MatrixXd PPhits = P * Phits.transpose();  // d x nts
    const Eigen::VectorXd Sigma = (s2 * (1.0 + (Phits.transpose().array() * PPhits.array()).colwise().sum())).transpose();
    const Eigen::VectorXd r = Y - Phits * theta;
    const double T = P.squaredNorm();
    out.loss += (Sigma.array().log() + r.array().square() / Sigma.array()).sum() + gamma * T * T0;
    if (!with_gradient) continue;

    const Eigen::ArrayXd a = 1.0 / Sigma.array() - r.array().square() / Sigma.array().square();
    const Eigen::ArrayXd c = 2.0 * r.array() / Sigma.array();
    const Eigen::VectorXd gtheta = -(Phits.transpose() * c.matrix());
    Eigen::MatrixXd gP = s2 * (Phits.transpose() * a.matrix().asDiagonal() * Phits) + gtheta * b.transpose() + 2.0 * gamma * T0 * P;
    const Eigen::VectorXd gb = P * gtheta;
    const Eigen::MatrixXd gLam = -P.transpose() * gP * P.transpose();
    const Eigen::MatrixXd gP0 = 2.0 * gamma * T * P0;
    gLam0 += gLam + gb * params.prior_mean.transpose() - P0.transpose() * gP0 * P0.transpose();
    out.grad_mean += Lam0.transpose() * gb;

    if (feature_gradient) {
      Eigen::MatrixXd adj(d, ntr + nts);
      // Train rows: Lambda = Phi^T Phi + ..., b = Phi^T G + ...
      adj.leftCols(ntr) = ((gLam + gLam.transpose()) * Phi.transpose()) + gb * G.transpose();
      // Test rows: Sigma_i = s2 (1 + phi^T P phi), r_i = y_i - phi^T theta.
      adj.rightCols(nts) = 2.0 * s2 * PPhits * a.matrix().asDiagonal();
      adj.rightCols(nts) -= theta * c.matrix().transpose();
      out.grad_w += params.net.parameter_gradient(cache, adj);
    }
  }
  if (with_gradient) {
    out.grad_L = ((gLam0 + gLam0.transpose()) * params.L).triangularView<Eigen::Lower>();
  }
  return out;
}

void MetaConfig::validate() const {
  if (n_iterations < 0) throw Error(ErrorCode::ConfigInvalid, "meta n_iterations must be >= 0");
  if (tasks_per_iteration < 1) throw Error(ErrorCode::ConfigInvalid, "meta tasks_per_iteration must be >= 1");
  if (!(gamma >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "meta gamma must be >= 0");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "meta learning_rate must be > 0");
  if (!(sigma > 0.0)) throw Error(ErrorCode::ConfigInvalid, "meta sigma must be > 0");
  if (!(lambda0_eps > 0.0) || !(init_precision > 0.0)) throw Error(ErrorCode::ConfigInvalid, "meta prior scales must be > 0");
  if (max_task_points < 2) throw Error(ErrorCode::ConfigInvalid, "meta max_task_points must be >= 2");
  if (probe_tasks < 0 || probe_every < 1) throw Error(ErrorCode::ConfigInvalid, "meta probe settings invalid");
  if (!(probe_delta > 0.0 && probe_delta < 1.0)) throw Error(ErrorCode::ConfigInvalid, "meta probe_delta must be in (0, 1)");
  net.validate();
}

MetaParams initial_meta_params(const MetaConfig& cfg) {
  MetaParams p;
  p.net = FeatureNet::random(cfg.net, cfg.seed);
  const int d = cfg.net.output_dim;
  p.prior_mean = Eigen::VectorXd::Zero(d);
  p.L = std::sqrt(cfg.init_precision) * Eigen::MatrixXd::Identity(d, d);
  p.sigma = cfg.sigma;
  p.eps = cfg.lambda0_eps;
  return p;
}

TaskSplit split_task(const SurfaceDataset& task, std::size_t max_points, std::mt19937_64& rng) {
  std::vector<SurfaceSample> pts = task.samples;
  std::shuffle(pts.begin(), pts.end(), rng);
  if (pts.size() > max_points) pts.resize(max_points);
  std::uniform_int_distribution<std::size_t> pick(1, pts.size());
  const std::size_t ntr = pick(rng);
  TaskSplit split;
  split.train.assign(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(ntr));
  split.test.assign(pts.begin() + static_cast<std::ptrdiff_t>(ntr), pts.end());
  return split;
}

double mean_probe_beta(const MetaParams& params, std::span<const SurfaceDataset> probes, double delta) {
  if (probes.empty()) return 0.0;
  const Posterior prior = params.prior();
  double sum = 0.0;
  for (const auto& task : probes) {
    const Posterior post = posterior_update(prior, task.samples, params.net);
    sum += confidence_radius(post, prior, delta);
  }
  return sum / static_cast<double>(probes.size());
}

namespace {

Eigen::VectorXd pack(const MetaParams& p, bool features) {
  const int d = static_cast<int>(p.prior_mean.size());
  const Eigen::Index nw = features ? static_cast<Eigen::Index>(p.net.parameter_count()) : 0;
  Eigen::VectorXd x(nw + d + d * (d + 1) / 2);
  if (features) x.head(nw) = p.net.flat();
  x.segment(nw, d) = p.prior_mean;
  Eigen::Index k = nw + d;
  for (int j = 0; j < d; ++j) {
    for (int i = j; i < d; ++i) x(k++) = p.L(i, j);
  }
  return x;
}

void unpack(const Eigen::VectorXd& x, MetaParams& p, bool features) {
  const int d = static_cast<int>(p.prior_mean.size());
  const Eigen::Index nw = features ? static_cast<Eigen::Index>(p.net.parameter_count()) : 0;
  if (features) p.net.set_flat(x.head(nw));
  p.prior_mean = x.segment(nw, d);
  Eigen::Index k = nw + d;
  for (int j = 0; j < d; ++j) {
    for (int i = j; i < d; ++i) p.L(i, j) = x(k++);
  }
}

Eigen::VectorXd pack_gradient(const MetaLossResult& g, bool features) {
  const int d = static_cast<int>(g.grad_mean.size());
  const Eigen::Index nw = features ? g.grad_w.size() : 0;
  Eigen::VectorXd x(nw + d + d * (d + 1) / 2);
  if (features) x.head(nw) = g.grad_w;
  x.segment(nw, d) = g.grad_mean;
  Eigen::Index k = nw + d;
  for (int j = 0; j < d; ++j) {
    for (int i = j; i < d; ++i) x(k++) = g.grad_L(i, j);
  }
  return x;
}

}  // namespace

MetaResult meta_train(const MetaConfig& cfg, const TaskSampler& sampler) {
  cfg.validate();
  return meta_train(cfg, sampler, initial_meta_params(cfg));
}

MetaResult meta_train(const MetaConfig& cfg, const TaskSampler& sampler, MetaParams init) {
  cfg.validate();
  MetaResult result{std::move(init), {}};
  MetaParams& params = result.params;
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x6d657461ULL));
  std::vector<SurfaceDataset> probes;
  if (cfg.probe_tasks > 0) {
    std::mt19937_64 probe_rng(splitmix64(cfg.seed ^ 0x70726f6265ULL));
    for (int k = 0; k < cfg.probe_tasks; ++k) {
      SurfaceDataset task = sampler(probe_rng);
      std::shuffle(task.samples.begin(), task.samples.end(), probe_rng);
      if (task.samples.size() > cfg.max_task_points) task.samples.resize(cfg.max_task_points);
      probes.push_back(std::move(task));
    }
  }
  const bool features = cfg.train_features;
  Eigen::VectorXd x = pack(params, features);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
  std::vector<TaskSplit> batch(static_cast<std::size_t>(cfg.tasks_per_iteration));

  for (int it = 0; it < cfg.n_iterations; ++it) {
    for (auto& t : batch) t = split_task(sampler(rng), cfg.max_task_points, rng);
    const MetaLossResult res = meta_loss(params, batch, cfg.gamma, true, features);
    const Eigen::VectorXd g = pack_gradient(res, features);
    if (!std::isfinite(res.loss) || !g.allFinite()) {
      throw Error(ErrorCode::NonFiniteLoss, "meta-training loss became non-finite at iteration " + std::to_string(it) +
                                                " (loss " + fmt_double(res.loss) + ")");
    }
    MetaLogRow row{it, res.loss, 0.0, false};
    if (!probes.empty() && it % cfg.probe_every == 0) {
      row.mean_beta = mean_probe_beta(params, probes, cfg.probe_delta);
      row.has_beta = true;
    }
    result.log.push_back(row);

    const double t = it + 1.0;
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    x -= (cfg.learning_rate * (m / c1).array() / ((v / c2).array().sqrt() + cfg.adam_eps)).matrix();
    unpack(x, params, features);
    // Asserts the prior stays SPD.
    (void)params.prior();
  }
  if (!probes.empty() && cfg.n_iterations > 0) {
    result.log.push_back({cfg.n_iterations, meta_loss(params, batch, cfg.gamma, false).loss,
                          mean_probe_beta(params, probes, cfg.probe_delta), true});
  }
  return result;
}

std::string meta_log_to_csv(std::span<const MetaLogRow> log) {
  std::ostringstream os;
  os << "iteration,loss,mean_beta\n";
  for (const auto& r : log) {
    os << r.iteration << ',' << fmt_double(r.loss) << ',';
    if (r.has_beta) os << fmt_double(r.mean_beta);
    os << '\n';
  }
  return os.str();
}

}  // namespace cbfmeta
