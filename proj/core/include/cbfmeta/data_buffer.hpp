#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "cbfmeta/bayes_blr.hpp"
#include "cbfmeta/feature_net.hpp"
#include "cbfmeta/surface_dataset.hpp"

namespace cbfmeta {

struct BufferConfig {
  double eta = 2e-6;            // predictive-variance threshold (m^2)
  std::size_t capacity = 5000;  // rows per obstacle

  void validate() const;
};

struct BufferUpdateStats {
  std::size_t anchors_seen = 0;
  std::size_t accepted = 0;
  std::size_t rejected_variance = 0;
  std::size_t rejected_capacity = 0;
};

/// Walks the anchor groups of `scan` in order. For each group the variance at
/// the surface point is queried; groups above eta are handed to `accept`
/// (which must refresh whatever `variance` reads) unless the row cap would be
/// exceeded. `rows` is the number of rows already stored.
BufferUpdateStats select_anchors(const SurfaceDataset& scan, const BufferConfig& cfg, std::size_t rows,
                                 const std::function<double(const Vec2&)>& variance,
                                 const std::function<void(const SurfaceDataset&, AnchorGroup)>& accept);

/// Per-obstacle store of accepted samples with the matching posterior.
class Buffer {
 public:
  Buffer() = default;
  Buffer(Posterior prior, BufferConfig cfg);

  const SurfaceDataset& data() const { return data_; }
  const Posterior& posterior() const { return posterior_; }
  const Posterior& prior() const { return prior_; }
  const BufferConfig& config() const { return cfg_; }
  std::size_t size() const { return data_.size(); }

  /// Accepts informative anchor groups one at a time, refreshing the posterior
  /// after each acceptance so later anchors see the new data.
  BufferUpdateStats update(const SurfaceDataset& scan, const FeatureNet& net);

 private:
  BufferConfig cfg_;
  Posterior prior_;
  Posterior posterior_;
  SurfaceDataset data_;
};

/// CSV with header `x,y,label,obstacle_id,anchor`.
std::string buffer_to_csv(const Buffer& buf);

}  // namespace cbfmeta
