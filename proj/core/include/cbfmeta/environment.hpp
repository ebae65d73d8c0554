#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace cbfmeta {

using Vec2 = Eigen::Vector2d;

struct Box2 {
  Vec2 min{-5.0, -5.0};
  Vec2 max{5.0, 5.0};

  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
  }
};

/// Rotated ellipse. Local coordinates are
///   u = dx cos(rotation) + dy sin(rotation),  w = dx sin(rotation) - dy cos(rotation)
/// with (dx, dy) measured from the center; the boundary is (u/cx)^2 + (w/cy)^2 = 1.
struct Ellipse {
  Vec2 semi_axes{0.5, 0.5};
  Vec2 center{0.0, 0.0};
  double rotation = 0.0;
};

/// Simple polygon, vertices counter-clockwise.
struct Polygon {
  std::vector<Vec2> vertices;
};

enum class ObstacleKind { Ellipse, Polygon };

inline constexpr int kDefaultBoundarySegments = 2048;

/// An immutable obstacle together with its dense boundary polyline, which is
/// the ground-truth geometry used for signed distances.
class Obstacle {
 public:
  Obstacle() = default;
  static Obstacle ellipse(const Ellipse& e, int boundary_segments = kDefaultBoundarySegments);
  static Obstacle polygon(const Polygon& p);

  ObstacleKind kind() const {
    return std::holds_alternative<Ellipse>(shape_) ? ObstacleKind::Ellipse : ObstacleKind::Polygon;
  }
  const Ellipse& as_ellipse() const;
  const Polygon& as_polygon() const;

  /// Closed polyline; the last vertex connects back to the first.
  const std::vector<Vec2>& boundary() const { return boundary_; }
  int boundary_segments() const { return static_cast<int>(boundary_.size()); }

  /// Longest chord of the boundary polyline.
  double max_chord() const { return max_chord_; }

  bool contains(const Vec2& z) const;

  /// Unsigned distance from z to the boundary polyline.
  double boundary_distance(const Vec2& z) const;

  /// Smallest t >= 0 with origin + t*direction on the boundary.
  std::optional<double> ray_hit(const Vec2& origin, const Vec2& direction) const;

  Vec2 centroid() const;

  /// Radius of a disk around centroid() containing the obstacle.
  double bounding_radius() const;

 private:
  void finalize();

  std::variant<Ellipse, Polygon> shape_;
  std::vector<Vec2> boundary_;
  double max_chord_ = 0.0;
};

struct EnvironmentSpec {
  std::vector<Obstacle> obstacles;
  Box2 world_bounds;
  std::uint64_t rng_seed = 0;
};

enum class ShapeFamily { Ellipse, Polygon, Mixed };

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

struct DistributionParams {
  Interval semi_axis{0.4, 0.8};
  Interval center{-0.8, 0.8};
  Interval rotation{0.0, 2.0 * std::numbers::pi};
  ShapeFamily family = ShapeFamily::Ellipse;
  int polygon_min_vertices = 5;
  int polygon_max_vertices = 9;
  double clearance = 0.1;
  int sampling_budget = 10000;
  int boundary_segments = kDefaultBoundarySegments;
  Box2 world_bounds;

  void validate() const;
};

/// Samples n_obs pairwise-disjoint obstacles (clearance margin enforced).
/// Throws Error(SamplingBudgetExceeded) when rejection sampling runs out.
EnvironmentSpec sample_environment(const DistributionParams& params, int n_obs, std::uint64_t seed);

/// Samples one obstacle from the distribution with the given engine state.
Obstacle sample_obstacle(const DistributionParams& params, std::mt19937_64& rng);

/// Metric signed distance: positive outside, negative inside.
double true_signed_distance(const EnvironmentSpec& env, std::size_t obstacle_index, const Vec2& z);

/// Quadratic level function of an ellipse: rotated normalized quadratic minus one.
/// Throws Error(WrongKind) for polygons.
double ellipse_level_value(const Obstacle& obstacle, const Vec2& z);

/// Minimum clearance between the boundaries of two obstacles; negative when
/// one contains part of the other.
double obstacle_clearance(const Obstacle& a, const Obstacle& b);

std::string to_json_string(const EnvironmentSpec& env);
EnvironmentSpec environment_from_json_string(const std::string& text);

}  // namespace cbfmeta
