#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cbfmeta/environment.hpp"

namespace cbfmeta {

struct LidarConfig {
  int n_rays = 150;
  double max_range = 3.0;
  double range_noise_std = 0.001;
  double angular_offset = 0.0;

  void validate() const;
};

struct Pose2 {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
};

struct RayHit {
  double range = 0.0;
  std::size_t obstacle_id = 0;
};

struct ScanHit {
  Vec2 point;          // world coordinates of the (noisy) surface return
  double angle = 0.0;  // ray angle relative to the sensor heading, in [0, 2pi)
  double range = 0.0;  // measured range
  std::size_t obstacle_id = 0;
};

struct Scan {
  Pose2 sensor_pose;
  std::vector<ScanHit> hits;  // ordered by ray angle
};

/// First boundary crossing along a ray, or nullopt when nothing is hit
/// within max_range.
std::optional<RayHit> ray_intersect(const EnvironmentSpec& env, const Vec2& origin,
                                    const Vec2& direction,
                                    double max_range = std::numeric_limits<double>::infinity());

/// One ray per angle 2*pi*k/n_rays + offset (sensor frame). Each range gets
/// Gaussian noise truncated at 5 sigma. The noise for ray k comes from its own
/// engine seeded from one draw of `rng` and k, so results do not depend on
/// the order in which rays are evaluated.
Scan cast_scan(const EnvironmentSpec& env, const Pose2& pose, const LidarConfig& cfg,
               std::mt19937_64& rng);

/// CSV with header `angle,range,x,y,obstacle_id`.
std::string scan_to_csv(const Scan& scan);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cbfmeta
