#include "cbfmeta/surface_dataset.hpp"

#include <limits>
#include <sstream>

#include "cbfmeta/error.hpp"
#include "cbfmeta/format.hpp"

namespace cbfmeta {

void OffsetConfig::validate() const {
  if (!(delta > 0.0)) throw Error(ErrorCode::ConfigInvalid, "offset delta must be > 0");
  if (n_minus < 0 || n_plus < 0) throw Error(ErrorCode::ConfigInvalid, "offset counts must be >= 0");
}

Vec2 approximate_normal(const Scan& scan, std::size_t hit_index) {
  const ScanHit& hit = scan.hits.at(hit_index);
  double best = std::numeric_limits<double>::infinity();
  std::size_t nearest = hit_index;
  for (std::size_t j = 0; j < scan.hits.size(); ++j) {
    if (j == hit_index || scan.hits[j].obstacle_id != hit.obstacle_id) continue;
    const double d = (scan.hits[j].point - hit.point).squaredNorm();
    if (d < best) {
      best = d;
      nearest = j;
    }
  }
  if (nearest == hit_index || !(best > 0.0)) {
    throw Error(ErrorCode::InsufficientNeighbors,
                "hit " + std::to_string(hit_index) + " has no distinct neighbour on obstacle " +
                    std::to_string(hit.obstacle_id));
  }
  const Vec2 seg = scan.hits[nearest].point - hit.point;
  Vec2 n{-seg.y(), seg.x()};
  n.normalize();
  if (n.dot(scan.sensor_pose.position - hit.point) < 0.0) n = -n;
  return n;
}

SurfaceDataset build_offset_dataset(const Scan& scan, const OffsetConfig& cfg) {
  cfg.validate();
  SurfaceDataset ds;
  ds.samples.reserve(scan.hits.size() * cfg.points_per_anchor());
  std::size_t anchor = 0;
  for (std::size_t i = 0; i < scan.hits.size(); ++i) {
    Vec2 n;
    try {
      n = approximate_normal(scan, i);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientNeighbors) throw;
      ++ds.skipped_hits;
      continue;
    }
    const ScanHit& hit = scan.hits[i];
    for (int p = -cfg.n_minus; p <= cfg.n_plus; ++p) {
      const double off = p * cfg.delta;
      ds.samples.push_back({hit.point + off * n, off, hit.obstacle_id, anchor, p});
    }
    ++anchor;
  }
  return ds;
}

std::vector<AnchorGroup> anchor_groups(const SurfaceDataset& ds) {
  std::vector<AnchorGroup> groups;
  std::size_t i = 0;
  while (i < ds.samples.size()) {
    std::size_t j = i + 1;
    while (j < ds.samples.size() && ds.samples[j].anchor == ds.samples[i].anchor) ++j;
    groups.push_back({i, j});
    i = j;
  }
  return groups;
}

const SurfaceSample& anchor_sample(const SurfaceDataset& ds, const AnchorGroup& g) {
  for (std::size_t i = g.begin; i < g.end; ++i) {
    if (ds.samples[i].offset == 0) return ds.samples[i];
  }
  throw Error(ErrorCode::DomainError, "anchor group without a surface sample");
}

void append_dataset(SurfaceDataset& dst, const SurfaceDataset& src) {
  std::size_t base = 0;
  if (!dst.samples.empty()) base = dst.samples.back().anchor + 1;
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  std::size_t next = base;
  for (SurfaceSample s : src.samples) {
    if (s.anchor != prev) {
      prev = s.anchor;
      s.anchor = next++;
    } else {
      s.anchor = next - 1;
    }
    dst.samples.push_back(s);
  }
  dst.skipped_hits += src.skipped_hits;
}

SurfaceDataset filter_obstacle(const SurfaceDataset& ds, std::size_t obstacle_id) {
  SurfaceDataset out;
  for (const auto& s : ds.samples) {
    if (s.obstacle_id == obstacle_id) out.samples.push_back(s);
  }
  return out;
}

std::string dataset_to_csv(const SurfaceDataset& ds) {
  std::ostringstream os;
  os << "x,y,label,obstacle_id,anchor\n";
  for (const auto& s : ds.samples) {
    os << fmt_double(s.z.x()) << ',' << fmt_double(s.z.y()) << ',' << fmt_double(s.label) << ','
       << s.obstacle_id << ',' << s.anchor << '\n';
  }
  return os.str();
}

}  // namespace cbfmeta
