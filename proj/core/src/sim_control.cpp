#include "cbfmeta/sim_control.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "cbfmeta/error.hpp"
#include "cbfmeta/format.hpp"
#include "json.hpp"

namespace cbfmeta {

double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

Eigen::Matrix<double, 3, 2> unicycle_input_matrix(double theta, double ell) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Eigen::Matrix<double, 3, 2> g;
  g << c, -ell * s, s, ell * c, 0.0, 1.0;
  return g;
}

RobotState dynamics_step(const RobotState& x, const Eigen::Vector2d& u, double dt, double ell) {
  auto field = [&](const Eigen::Vector3d& s) -> Eigen::Vector3d { return unicycle_input_matrix(s(2), ell) * u; };
  const Eigen::Vector3d s0 = x.vec();
  const Eigen::Vector3d k1 = field(s0);
  const Eigen::Vector3d k2 = field(s0 + 0.5 * dt * k1);
  const Eigen::Vector3d k3 = field(s0 + 0.5 * dt * k2);
  const Eigen::Vector3d k4 = field(s0 + dt * k3);
  const Eigen::Vector3d s1 = s0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return {s1(0), s1(1), wrap_angle(s1(2))};
}

std::string to_string(Backend b) { return b == Backend::Meta ? "meta" : "gp"; }

Backend backend_from_string(const std::string& s) {
  if (s == "meta") return Backend::Meta;
  if (s == "gp") return Backend::Gp;
  throw Error(ErrorCode::ConfigInvalid, "unknown backend '" + s + "'");
}

namespace {

int ratio(double a, double b) { return static_cast<int>(std::llround(a / b)); }

bool is_multiple(double a, double b) { return std::abs(a / b - std::round(a / b)) < 1e-9; }

}  // namespace

int EpisodeConfig::steps() const { return ratio(T, dt); }
int EpisodeConfig::lidar_stride() const { return std::max(1, ratio(lidar_period, dt)); }
int EpisodeConfig::cse_stride() const { return std::max(1, ratio(cse_period, dt)); }

void EpisodeConfig::validate() const {
  if (!(dt > 0.0) || !(T >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "episode dt must be > 0 and T >= 0");
  if (!(lidar_period > 0.0) || !is_multiple(lidar_period, dt)) {
    throw Error(ErrorCode::ConfigInvalid, "lidar_period must be a positive multiple of dt");
  }
  if (!(cse_period > 0.0) || !is_multiple(cse_period, dt)) {
    throw Error(ErrorCode::ConfigInvalid, "cse_period must be a positive multiple of dt");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorCode::ConfigInvalid, "delta must be in (0, 1)");
  if (!(ell > 0.0) || !(v_max > 0.0) || !(omega_max > 0.0) || !(lambda > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "ell, input bounds and lambda must be > 0");
  }
  if (!(gamma_c > 0.0) || !(gamma_v > 0.0)) throw Error(ErrorCode::ConfigInvalid, "class-K gains must be > 0");
  buffer.validate();
  offsets.validate();
  gp.validate();
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Learned state for one obstacle.
struct ObstacleTrack {
  bool detected = false;
  Buffer blr;              // meta backend
  SurfaceDataset gp_data;  // gp backend
  std::shared_ptr<const BarrierModel> model;
  double beta = std::numeric_limits<double>::quiet_NaN();
  // Invariant bookkeeping for the current model.
  bool segment_safe = false;
  std::optional<double> prev_h;
};

}  // namespace

EpisodeResult run_episode(const EnvironmentSpec& env, const ModelBundle* bundle, const EpisodeConfig& cfg,
                          const LidarConfig& lidar) {
  cfg.validate();
  lidar.validate();
  if (cfg.backend == Backend::Meta && bundle == nullptr) {
    throw Error(ErrorCode::ConfigInvalid, "meta backend needs a trained bundle");
  }
  const std::size_t n_obs = env.obstacles.size();
  std::shared_ptr<const FeatureNet> net;
  if (bundle != nullptr) net = std::make_shared<const FeatureNet>(bundle->net);
  std::vector<ObstacleTrack> tracks(n_obs);
  if (cfg.backend == Backend::Meta) {
    for (auto& t : tracks) t.blr = Buffer(bundle->prior, cfg.buffer);
  }

  const CbfClfParams qp_params = [&] {
    CbfClfParams p = CbfClfParams::with_box(cfg.v_max, cfg.omega_max);
    p.gamma_c = cfg.gamma_c;
    p.gamma_v = cfg.gamma_v;
    p.lambda = cfg.lambda;
    return p;
  }();

  EpisodeResult result;
  EpisodeLog& log = result.log;
  log.cse_stride = cfg.cse_stride();
  std::mt19937_64 rng(cfg.seed);
  RobotState x = cfg.start;
  x.theta = wrap_angle(x.theta);
  const int steps = cfg.steps();
  const int lidar_stride = cfg.lidar_stride();

  for (int k = 0; k <= steps; ++k) {
    if (k % lidar_stride == 0 && k < steps) {
      auto t0 = Clock::now();
      const Scan scan = cast_scan(env, {x.position(), x.theta}, lidar, rng);
      const SurfaceDataset ds = build_offset_dataset(scan, cfg.offsets);
      log.scan_seconds += seconds_since(t0);
      t0 = Clock::now();
      for (std::size_t j = 0; j < n_obs; ++j) {
        const SurfaceDataset mine = filter_obstacle(ds, j);
        if (mine.empty()) continue;
        auto& tr = tracks[j];
        if (cfg.backend == Backend::Meta) {
          const auto stats = tr.blr.update(mine, *net);
          if (tr.detected && stats.accepted == 0) continue;
          tr.beta = confidence_radius(tr.blr.posterior(), bundle->prior, cfg.delta);
          tr.model = std::make_shared<BlrBarrier>(net, tr.blr.posterior(), tr.beta);
        } else {
          // Selection reads the previous GP snapshot; the GP is refit once per scan.
          std::function<double(const Vec2&)> variance = [&](const Vec2&) { return std::numeric_limits<double>::infinity(); };
          if (tr.model) {
            const auto* gp = static_cast<const GpBarrier*>(tr.model.get());
            variance = [gp](const Vec2& z) { return gp->model().predict(z).variance + gp->model().hyper().noise_var; };
          }
          const auto stats = select_anchors(mine, cfg.buffer, tr.gp_data.size(), variance,
                                            [&](const SurfaceDataset& src, AnchorGroup g) {
                                              SurfaceDataset piece;
                                              piece.samples.assign(src.samples.begin() + static_cast<std::ptrdiff_t>(g.begin),
                                                                   src.samples.begin() + static_cast<std::ptrdiff_t>(g.end));
                                              append_dataset(tr.gp_data, piece);
                                            });
          if (stats.accepted == 0 && tr.model) continue;
          if (tr.gp_data.empty()) continue;
          tr.model = std::make_shared<GpBarrier>(gp_fit(tr.gp_data, cfg.gp));
        }
        tr.detected = true;
        tr.prev_h.reset();
        ++log.cbf_updates;
      }
      log.update_seconds += seconds_since(t0);
    }

    StepRecord rec;
    rec.t = k * cfg.dt;
    rec.x = x;
    rec.hb.resize(n_obs);
    rec.true_sd.resize(n_obs);
    rec.buffer_rows.resize(n_obs);
    rec.segment_safe.assign(n_obs, 0);
    std::vector<CertificateEval> barriers;
    bool mean_only = false;
    for (std::size_t j = 0; j < n_obs; ++j) {
      auto& tr = tracks[j];
      rec.true_sd[j] = true_signed_distance(env, j, x.position());
      rec.buffer_rows[j] = cfg.backend == Backend::Meta ? tr.blr.size() : tr.gp_data.size();
      if (!tr.detected) {
        if (rec.true_sd[j] < 0.0) ++log.undetected_violation_steps;
        continue;
      }
      const BarrierEval e = tr.model->evaluate(x.position());
      mean_only = mean_only || e.mean_only_gradient;
      rec.hb[j] = e.value;
      if (rec.true_sd[j] < 0.0) ++log.violation_steps;
      if (!tr.prev_h) {
        tr.segment_safe = e.value >= 0.0;
        if (!tr.segment_safe) ++log.invariant_skipped_segments;
      } else {
        log.kappa = std::max(log.kappa, std::abs(e.value - *tr.prev_h) / cfg.dt);
      }
      tr.prev_h = e.value;
      rec.segment_safe[j] = tr.segment_safe ? 1 : 0;
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(3);
      grad.head<2>() = e.gradient;
      barriers.push_back({e.value, grad});
    }
    if (mean_only) ++log.mean_only_gradient_steps;
    if (k == steps) {
      log.steps.push_back(std::move(rec));
      break;
    }

    const auto t0 = Clock::now();
    const Vec2 err = x.position() - cfg.goal;
    Eigen::VectorXd vgrad = Eigen::VectorXd::Zero(3);
    vgrad.head<2>() = 2.0 * err;
    const ControlAffineEval dyn{Eigen::VectorXd::Zero(3), unicycle_input_matrix(x.theta, cfg.ell)};
    QPSolution sol;
    try {
      sol = solve_qp(assemble_cbf_clf_qp(dyn, {err.squaredNorm(), vgrad}, barriers, qp_params));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateRow) throw;
      sol.status = QPStatus::Infeasible;
    }
    log.qp_seconds += seconds_since(t0);
    rec.status = sol.status;
    if (sol.status == QPStatus::Solved) {
      rec.u = sol.x.head<2>();
      rec.eps = sol.x(2);
    } else {
      rec.fallback = true;
      ++log.infeasible_steps;
    }
    log.steps.push_back(rec);
    x = dynamics_step(x, rec.u, cfg.dt, cfg.ell);
    if (!env.world_bounds.contains(x.position()) || !std::isfinite(x.theta)) {
      log.aborted = true;
      log.abort_reason = "state left world bounds at t=" + fmt_double((k + 1) * cfg.dt);
      break;
    }
  }

  // Discrete-time invariant: within each model segment that started safe,
  // h^b stays above -kappa dt.
  const double slack = log.kappa * cfg.dt;
  for (const auto& rec : log.steps) {
    if (rec.fallback) continue;
    for (std::size_t j = 0; j < n_obs; ++j) {
      if (!rec.hb[j] || !rec.segment_safe[j]) continue;
      ++log.invariant_checked_steps;
      if (*rec.hb[j] < -slack) ++log.invariant_failures;
    }
  }

  log.final_state = log.steps.empty() ? x : log.steps.back().x;
  log.final_distance = (log.final_state.position() - cfg.goal).norm();
  log.cse = cumulative_squared_error(log, cfg.goal);
  for (auto& tr : tracks) {
    log.final_beta.push_back(tr.beta);
    result.barriers.push_back(tr.model);
  }
  return result;
}

double cumulative_squared_error(const EpisodeLog& log, const Vec2& goal) {
  double sum = 0.0;
  const std::size_t stride = static_cast<std::size_t>(std::max(1, log.cse_stride));
  // The final row is the terminal state, not the start of a control interval.
  const std::size_t n = log.steps.empty() ? 0 : log.steps.size() - 1;
  for (std::size_t r = 0; r < n; r += stride) sum += (log.steps[r].x.position() - goal).squaredNorm();
  return sum;
}

std::string episode_to_csv(const EpisodeLog& log) {
  std::ostringstream os;
  const std::size_t n_obs = log.steps.empty() ? 0 : log.steps.front().hb.size();
  os << "t,qx,qy,theta,v,omega,eps,status";
  for (std::size_t j = 0; j < n_obs; ++j) os << ",hb_" << j << ",sd_" << j << ",rows_" << j;
  os << '\n';
  for (const auto& r : log.steps) {
    os << fmt_double(r.t) << ',' << fmt_double(r.x.qx) << ',' << fmt_double(r.x.qy) << ',' << fmt_double(r.x.theta)
       << ',' << fmt_double(r.u(0)) << ',' << fmt_double(r.u(1)) << ',' << fmt_double(r.eps) << ','
       << (r.fallback ? "fallback" : to_string(r.status));
    for (std::size_t j = 0; j < n_obs; ++j) {
      os << ',';
      if (r.hb[j]) os << fmt_double(*r.hb[j]);
      os << ',' << fmt_double(r.true_sd[j]) << ',' << r.buffer_rows[j];
    }
    os << '\n';
  }
  return os.str();
}

std::string episode_summary_json(const EpisodeLog& log) {
  nlohmann::ordered_json j;
  j["cse"] = log.cse;
  j["final_distance"] = log.final_distance;
  j["steps"] = log.steps.size();
  j["violation_steps"] = log.violation_steps;
  j["undetected_violation_steps"] = log.undetected_violation_steps;
  j["infeasible_steps"] = log.infeasible_steps;
  j["cbf_updates"] = log.cbf_updates;
  j["mean_only_gradient_steps"] = log.mean_only_gradient_steps;
  j["aborted"] = log.aborted;
  j["abort_reason"] = log.abort_reason;
  j["kappa"] = log.kappa;
  j["invariant_checked_steps"] = log.invariant_checked_steps;
  j["invariant_failures"] = log.invariant_failures;
  j["invariant_skipped_segments"] = log.invariant_skipped_segments;
  nlohmann::json betas = nlohmann::json::array();
  for (double b : log.final_beta) betas.push_back(std::isfinite(b) ? nlohmann::json(b) : nlohmann::json(nullptr));
  j["final_beta"] = betas;
  j["wall_clock"] = {{"scan_seconds", log.scan_seconds},
                     {"update_seconds", log.update_seconds},
                     {"qp_seconds", log.qp_seconds}};
  return j.dump(2) + "\n";
}

std::string hb_grid_to_csv(const EnvironmentSpec& env, const std::vector<std::shared_ptr<const BarrierModel>>& barriers,
                           const GridSpec& grid) {
  std::ostringstream os;
  os << "x,y,obstacle_id,hb,mean,true_sd\n";
  for (std::size_t j = 0; j < barriers.size() && j < env.obstacles.size(); ++j) {
    if (!barriers[j]) continue;
    for (int iy = 0; iy < grid.ny; ++iy) {
      for (int ix = 0; ix < grid.nx; ++ix) {
        const double fx = grid.nx > 1 ? static_cast<double>(ix) / (grid.nx - 1) : 0.5;
        const double fy = grid.ny > 1 ? static_cast<double>(iy) / (grid.ny - 1) : 0.5;
        const Vec2 z = grid.region.min + Vec2(fx * (grid.region.max.x() - grid.region.min.x()),
                                              fy * (grid.region.max.y() - grid.region.min.y()));
        const BarrierEval e = barriers[j]->evaluate(z);
        os << fmt_double(z.x()) << ',' << fmt_double(z.y()) << ',' << j << ',' << fmt_double(e.value) << ','
           << fmt_double(e.mean) << ',' << fmt_double(true_signed_distance(env, j, z)) << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace cbfmeta
