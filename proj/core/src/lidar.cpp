#include "cbfmeta/lidar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cbfmeta/error.hpp"
#include "cbfmeta/format.hpp"

namespace cbfmeta {

void LidarConfig::validate() const {
  if (n_rays < 1) throw Error(ErrorCode::ConfigInvalid, "lidar n_rays must be >= 1");
  if (!(max_range > 0.0)) throw Error(ErrorCode::ConfigInvalid, "lidar max_range must be > 0");
  if (!(range_noise_std >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "lidar noise std must be >= 0");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::optional<RayHit> ray_intersect(const EnvironmentSpec& env, const Vec2& origin,
                                    const Vec2& direction, double max_range) {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < env.obstacles.size(); ++i) {
    const auto t = env.obstacles[i].ray_hit(origin, direction);
    if (t && *t <= max_range && (!best || *t < best->range)) best = RayHit{*t, i};
  }
  return best;
}

Scan cast_scan(const EnvironmentSpec& env, const Pose2& pose, const LidarConfig& cfg,
               std::mt19937_64& rng) {
  cfg.validate();
  const std::uint64_t base = rng();
  Scan scan;
  scan.sensor_pose = pose;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int k = 0; k < cfg.n_rays; ++k) {
    double rel = std::fmod(two_pi * k / cfg.n_rays + cfg.angular_offset, two_pi);
    if (rel < 0.0) rel += two_pi;
    const double world = pose.heading + rel;
    const Vec2 dir{std::cos(world), std::sin(world)};
    const auto hit = ray_intersect(env, pose.position, dir, cfg.max_range);
    if (!hit) continue;
    double noise = 0.0;
    if (cfg.range_noise_std > 0.0) {
      std::mt19937_64 ray_rng(splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(k))));
      std::normal_distribution<double> normal(0.0, cfg.range_noise_std);
      do {
        noise = normal(ray_rng);
      } while (std::abs(noise) > 5.0 * cfg.range_noise_std);
    }
    const double range = hit->range + noise;
    scan.hits.push_back({pose.position + range * dir, rel, range, hit->obstacle_id});
  }
  std::stable_sort(scan.hits.begin(), scan.hits.end(),
                   [](const ScanHit& a, const ScanHit& b) { return a.angle < b.angle; });
  return scan;
}

std::string scan_to_csv(const Scan& scan) {
  std::ostringstream os;
  os << "angle,range,x,y,obstacle_id\n";
  for (const auto& h : scan.hits) {
    os << fmt_double(h.angle) << ',' << fmt_double(h.range) << ',' << fmt_double(h.point.x()) << ','
       << fmt_double(h.point.y()) << ',' << h.obstacle_id << '\n';
  }
  return os.str();
}

}  // namespace cbfmeta
