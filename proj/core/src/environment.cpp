#include "cbfmeta/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cbfmeta/error.hpp"
#include "json.hpp"

namespace cbfmeta {

namespace {

using nlohmann::json;

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * ab - p).norm();
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Local (u, w) coordinates of the ellipse parametrisation, see Ellipse.
Vec2 ellipse_local(const Ellipse& e, const Vec2& z) {
  const double c = std::cos(e.rotation);
  const double s = std::sin(e.rotation);
  const Vec2 d = z - e.center;
  return {d.x() * c + d.y() * s, d.x() * s - d.y() * c};
}

Vec2 ellipse_world(const Ellipse& e, const Vec2& local) {
  // The local map is an involution (a reflection composed with a rotation).
  const double c = std::cos(e.rotation);
  const double s = std::sin(e.rotation);
  return e.center + Vec2{c * local.x() + s * local.y(), s * local.x() - c * local.y()};
}

std::vector<Vec2> coarse_boundary(const Obstacle& o, int segments) {
  if (o.kind() == ObstacleKind::Polygon) return o.as_polygon().vertices;
  const Ellipse& e = o.as_ellipse();
  std::vector<Vec2> pts;
  pts.reserve(segments);
  for (int k = 0; k < segments; ++k) {
    const double t = 2.0 * std::numbers::pi * k / segments;
    pts.push_back(ellipse_world(e, {e.semi_axes.x() * std::cos(t), e.semi_axes.y() * std::sin(t)}));
  }
  return pts;
}

double polyline_distance(const std::vector<Vec2>& poly, const Vec2& z) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    best = std::min(best, point_segment_distance(z, poly[i], poly[(i + 1) % n]));
  }
  return best;
}

double uniform(std::mt19937_64& rng, const Interval& iv) {
  return std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
}

}  // namespace

Obstacle Obstacle::ellipse(const Ellipse& e, int boundary_segments) {
  if (!(e.semi_axes.x() > 0.0) || !(e.semi_axes.y() > 0.0)) {
    throw Error(ErrorCode::DomainError, "ellipse semi-axes must be positive");
  }
  if (boundary_segments < 8) {
    throw Error(ErrorCode::DomainError, "ellipse discretisation needs at least 8 segments");
  }
  Obstacle o;
  o.shape_ = e;
  o.boundary_.reserve(boundary_segments);
  for (int k = 0; k < boundary_segments; ++k) {
    const double t = 2.0 * std::numbers::pi * k / boundary_segments;
    o.boundary_.push_back(
        ellipse_world(e, {e.semi_axes.x() * std::cos(t), e.semi_axes.y() * std::sin(t)}));
  }
  o.finalize();
  return o;
}

Obstacle Obstacle::polygon(const Polygon& p) {
  const std::size_t n = p.vertices.size();
  if (n < 3) throw Error(ErrorCode::DomainError, "polygon needs at least 3 vertices");
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) area2 += cross(p.vertices[i], p.vertices[(i + 1) % n]);
  if (!(std::abs(area2) > 0.0)) throw Error(ErrorCode::DomainError, "degenerate polygon");
  // Non-adjacent edges must not intersect.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      const Vec2& a = p.vertices[i];
      const Vec2& b = p.vertices[(i + 1) % n];
      const Vec2& c = p.vertices[j];
      const Vec2& d = p.vertices[(j + 1) % n];
      const double d1 = cross(b - a, c - a);
      const double d2 = cross(b - a, d - a);
      const double d3 = cross(d - c, a - c);
      const double d4 = cross(d - c, b - c);
      if (((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0))) {
        throw Error(ErrorCode::DomainError, "polygon is self-intersecting");
      }
    }
  }
  Obstacle o;
  Polygon ccw = p;
  if (area2 < 0.0) std::reverse(ccw.vertices.begin(), ccw.vertices.end());
  o.boundary_ = ccw.vertices;
  o.shape_ = std::move(ccw);
  o.finalize();
  return o;
}

void Obstacle::finalize() {
  max_chord_ = 0.0;
  const std::size_t n = boundary_.size();
  for (std::size_t i = 0; i < n; ++i) {
    max_chord_ = std::max(max_chord_, (boundary_[(i + 1) % n] - boundary_[i]).norm());
  }
}

const Ellipse& Obstacle::as_ellipse() const {
  if (const auto* e = std::get_if<Ellipse>(&shape_)) return *e;
  throw Error(ErrorCode::WrongKind, "obstacle is not an ellipse");
}

const Polygon& Obstacle::as_polygon() const {
  if (const auto* p = std::get_if<Polygon>(&shape_)) return *p;
  throw Error(ErrorCode::WrongKind, "obstacle is not a polygon");
}

bool Obstacle::contains(const Vec2& z) const {
  if (const auto* e = std::get_if<Ellipse>(&shape_)) {
    const Vec2 l = ellipse_local(*e, z);
    const double a = l.x() / e->semi_axes.x();
    const double b = l.y() / e->semi_axes.y();
    return a * a + b * b < 1.0;
  }
  // Even-odd crossing test.
  bool inside = false;
  const auto& v = boundary_;
  const std::size_t n = v.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((v[i].y() > z.y()) != (v[j].y() > z.y())) {
      const double x = v[j].x() + (z.y() - v[j].y()) * (v[i].x() - v[j].x()) / (v[i].y() - v[j].y());
      if (z.x() < x) inside = !inside;
    }
  }
  return inside;
}

double Obstacle::boundary_distance(const Vec2& z) const { return polyline_distance(boundary_, z); }

std::optional<double> Obstacle::ray_hit(const Vec2& origin, const Vec2& direction) const {
  if (const auto* e = std::get_if<Ellipse>(&shape_)) {
    // Work in normalised local coordinates where the ellipse is the unit circle.
    const Vec2 o = ellipse_local(*e, origin);
    const Vec2 dl = ellipse_local(*e, e->center + direction);
    const Vec2 p{o.x() / e->semi_axes.x(), o.y() / e->semi_axes.y()};
    const Vec2 d{dl.x() / e->semi_axes.x(), dl.y() / e->semi_axes.y()};
    const double a = d.squaredNorm();
    const double b = 2.0 * p.dot(d);
    const double c = p.squaredNorm() - 1.0;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    // Numerically stable pair of roots.
    const double q = -0.5 * (b + std::copysign(sq, b));
    double t0 = q / a;
    double t1 = q != 0.0 ? c / q : t0;
    if (t0 > t1) std::swap(t0, t1);
    if (t0 >= 0.0) return t0;
    if (t1 >= 0.0) return t1;
    return std::nullopt;
  }
  std::optional<double> best;
  const auto& v = boundary_;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = v[i];
    const Vec2 s = v[(i + 1) % n] - a;
    const double denom = cross(direction, s);
    if (std::abs(denom) < 1e-15) continue;
    const Vec2 ao = a - origin;
    const double t = cross(ao, s) / denom;
    const double u = cross(ao, direction) / denom;
    if (t >= 0.0 && u >= 0.0 && u <= 1.0 && (!best || t < *best)) best = t;
  }
  return best;
}

Vec2 Obstacle::centroid() const {
  if (const auto* e = std::get_if<Ellipse>(&shape_)) return e->center;
  Vec2 c = Vec2::Zero();
  for (const auto& v : boundary_) c += v;
  return c / static_cast<double>(boundary_.size());
}

double Obstacle::bounding_radius() const {
  const Vec2 c = centroid();
  double r = 0.0;
  for (const auto& v : boundary_) r = std::max(r, (v - c).norm());
  return r + max_chord_;
}

void DistributionParams::validate() const {
  auto check = [](const Interval& iv, const char* name) {
    if (!(iv.lo <= iv.hi)) throw Error(ErrorCode::ConfigInvalid, std::string("empty interval: ") + name);
  };
  check(semi_axis, "semi_axis");
  check(center, "center");
  check(rotation, "rotation");
  if (!(semi_axis.lo > 0.0)) throw Error(ErrorCode::ConfigInvalid, "semi_axis must be positive");
  if (polygon_min_vertices < 3 || polygon_max_vertices < polygon_min_vertices) {
    throw Error(ErrorCode::ConfigInvalid, "invalid polygon vertex range");
  }
  if (clearance < 0.0) throw Error(ErrorCode::ConfigInvalid, "clearance must be nonnegative");
  if (sampling_budget < 1) throw Error(ErrorCode::ConfigInvalid, "sampling budget must be positive");
}

Obstacle sample_obstacle(const DistributionParams& params, std::mt19937_64& rng) {
  const bool polygon =
      params.family == ShapeFamily::Polygon ||
      (params.family == ShapeFamily::Mixed && std::bernoulli_distribution(0.5)(rng));
  if (!polygon) {
    Ellipse e;
    e.semi_axes = {uniform(rng, params.semi_axis), uniform(rng, params.semi_axis)};
    e.center = {uniform(rng, params.center), uniform(rng, params.center)};
    e.rotation = uniform(rng, params.rotation);
    return Obstacle::ellipse(e, params.boundary_segments);
  }
  // Star-shaped polygon: monotone angles around the center keep it simple.
  const int n = std::uniform_int_distribution<int>(params.polygon_min_vertices,
                                                   params.polygon_max_vertices)(rng);
  const double scale = uniform(rng, params.semi_axis);
  const Vec2 center{uniform(rng, params.center), uniform(rng, params.center)};
  const double rot = uniform(rng, params.rotation);
  const double step = 2.0 * std::numbers::pi / n;
  Polygon p;
  for (int k = 0; k < n; ++k) {
    const double ang = rot + step * (k + std::uniform_real_distribution<double>(-0.3, 0.3)(rng));
    const double r = scale * std::uniform_real_distribution<double>(0.6, 1.0)(rng);
    p.vertices.push_back(center + r * Vec2{std::cos(ang), std::sin(ang)});
  }
  return Obstacle::polygon(p);
}

double obstacle_clearance(const Obstacle& a, const Obstacle& b) {
  constexpr int kCoarse = 256;
  const auto pa = coarse_boundary(a, kCoarse);
  const auto pb = coarse_boundary(b, kCoarse);
  if (a.contains(pb.front()) || b.contains(pa.front())) return -1.0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pa) best = std::min(best, polyline_distance(pb, p));
  for (const auto& p : pb) best = std::min(best, polyline_distance(pa, p));
  for (const auto& p : pa) {
    if (b.contains(p)) return -best;
  }
  return best;
}

EnvironmentSpec sample_environment(const DistributionParams& params, int n_obs, std::uint64_t seed) {
  params.validate();
  if (n_obs < 0) throw Error(ErrorCode::ConfigInvalid, "n_obs must be nonnegative");
  EnvironmentSpec env;
  env.world_bounds = params.world_bounds;
  env.rng_seed = seed;
  std::mt19937_64 rng(seed);
  int attempts = 0;
  while (static_cast<int>(env.obstacles.size()) < n_obs) {
    if (attempts++ >= params.sampling_budget) {
      throw Error(ErrorCode::SamplingBudgetExceeded,
                  "could not place " + std::to_string(n_obs) + " disjoint obstacles within " +
                      std::to_string(params.sampling_budget) + " attempts");
    }
    Obstacle cand = sample_obstacle(params, rng);
    bool ok = std::all_of(cand.boundary().begin(), cand.boundary().end(),
                          [&](const Vec2& v) { return env.world_bounds.contains(v); });
    for (const auto& o : env.obstacles) {
      if (!ok) break;
      const double center_gap = (o.centroid() - cand.centroid()).norm() - o.bounding_radius() -
                                cand.bounding_radius();
      if (center_gap > params.clearance) continue;
      ok = obstacle_clearance(o, cand) > params.clearance;
    }
    if (ok) env.obstacles.push_back(std::move(cand));
  }
  return env;
}

double true_signed_distance(const EnvironmentSpec& env, std::size_t obstacle_index, const Vec2& z) {
  const Obstacle& o = env.obstacles.at(obstacle_index);
  const double d = o.boundary_distance(z);
  return o.contains(z) ? -d : d;
}

double ellipse_level_value(const Obstacle& obstacle, const Vec2& z) {
  const Ellipse& e = obstacle.as_ellipse();
  const Vec2 l = ellipse_local(e, z);
  return l.x() * l.x() / (e.semi_axes.x() * e.semi_axes.x()) +
         l.y() * l.y() / (e.semi_axes.y() * e.semi_axes.y()) - 1.0;
}

namespace {

json obstacle_to_json(const Obstacle& o) {
  if (o.kind() == ObstacleKind::Ellipse) {
    const Ellipse& e = o.as_ellipse();
    return {{"kind", "ellipse"},
            {"semi_axes", {e.semi_axes.x(), e.semi_axes.y()}},
            {"center", {e.center.x(), e.center.y()}},
            {"rotation", e.rotation},
            {"boundary_segments", o.boundary_segments()}};
  }
  json verts = json::array();
  for (const auto& v : o.as_polygon().vertices) verts.push_back({v.x(), v.y()});
  return {{"kind", "polygon"}, {"vertices", verts}};
}

Vec2 vec2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

Obstacle obstacle_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "ellipse") {
    Ellipse e;
    e.semi_axes = vec2_from(j.at("semi_axes"));
    e.center = vec2_from(j.at("center"));
    e.rotation = j.at("rotation").get<double>();
    return Obstacle::ellipse(e, j.value("boundary_segments", kDefaultBoundarySegments));
  }
  if (kind == "polygon") {
    Polygon p;
    for (const auto& v : j.at("vertices")) p.vertices.push_back(vec2_from(v));
    return Obstacle::polygon(p);
  }
  throw Error(ErrorCode::FormatMismatch, "unknown obstacle kind: " + kind);
}

}  // namespace

std::string to_json_string(const EnvironmentSpec& env) {
  json obs = json::array();
  for (const auto& o : env.obstacles) obs.push_back(obstacle_to_json(o));
  json j = {{"obstacles", obs},
            {"world_bounds",
             {{"min", {env.world_bounds.min.x(), env.world_bounds.min.y()}},
              {"max", {env.world_bounds.max.x(), env.world_bounds.max.y()}}}},
            {"rng_seed", env.rng_seed}};
  return j.dump(2);
}

EnvironmentSpec environment_from_json_string(const std::string& text) {
  try {
    const json j = json::parse(text);
    EnvironmentSpec env;
    for (const auto& o : j.at("obstacles")) env.obstacles.push_back(obstacle_from_json(o));
    env.world_bounds.min = vec2_from(j.at("world_bounds").at("min"));
    env.world_bounds.max = vec2_from(j.at("world_bounds").at("max"));
    env.rng_seed = j.value("rng_seed", std::uint64_t{0});
    return env;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatMismatch, std::string("environment JSON: ") + e.what());
  }
}

}  // namespace cbfmeta
