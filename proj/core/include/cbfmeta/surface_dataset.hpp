#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cbfmeta/lidar.hpp"

namespace cbfmeta {

struct OffsetConfig {
  double delta = 0.1;
  int n_minus = 1;
  int n_plus = 5;

  int points_per_anchor() const { return n_minus + n_plus + 1; }
  void validate() const;
};

struct SurfaceSample {
  Vec2 z;
  double label = 0.0;
  std::size_t obstacle_id = 0;
  std::size_t anchor = 0;
  int offset = 0;  // p in [-n_minus, n_plus]; label == p * delta
};

/// Labeled signed-distance samples. Samples that share an anchor are stored
/// contiguously, ordered by offset.
struct SurfaceDataset {
  std::vector<SurfaceSample> samples;
  std::size_t skipped_hits = 0;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
};

/// Contiguous [begin, end) range of samples belonging to one anchor.
struct AnchorGroup {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Unit normal at a hit, perpendicular to the segment joining the hit and its
/// nearest neighbour on the same obstacle, pointing toward the sensor.
/// Throws Error(InsufficientNeighbors) when the obstacle has a single hit.
Vec2 approximate_normal(const Scan& scan, std::size_t hit_index);

/// Offset points z + p*delta*n for p in [-n_minus, n_plus], labeled p*delta.
/// Hits without a normal are skipped and counted in `skipped_hits`.
SurfaceDataset build_offset_dataset(const Scan& scan, const OffsetConfig& cfg);

std::vector<AnchorGroup> anchor_groups(const SurfaceDataset& ds);

/// Surface point (offset 0) of an anchor group.
const SurfaceSample& anchor_sample(const SurfaceDataset& ds, const AnchorGroup& g);

/// Appends src to dst, renumbering anchors so they stay unique.
void append_dataset(SurfaceDataset& dst, const SurfaceDataset& src);

SurfaceDataset filter_obstacle(const SurfaceDataset& ds, std::size_t obstacle_id);

/// CSV with header `x,y,label,obstacle_id,anchor`.
std::string dataset_to_csv(const SurfaceDataset& ds);

}  // namespace cbfmeta
