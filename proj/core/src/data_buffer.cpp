#include "cbfmeta/data_buffer.hpp"

#include <cmath>

#include "cbfmeta/error.hpp"

namespace cbfmeta {

void BufferConfig::validate() const {
  if (!(eta >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "buffer eta must be >= 0");
  if (capacity == 0) throw Error(ErrorCode::ConfigInvalid, "buffer capacity must be >= 1");
}

BufferUpdateStats select_anchors(const SurfaceDataset& scan, const BufferConfig& cfg, std::size_t rows,
                                 const std::function<double(const Vec2&)>& variance,
                                 const std::function<void(const SurfaceDataset&, AnchorGroup)>& accept) {
  BufferUpdateStats stats;
  for (const auto& g : anchor_groups(scan)) {
    ++stats.anchors_seen;
    if (!(variance(anchor_sample(scan, g).z) > cfg.eta)) {
      ++stats.rejected_variance;
      continue;
    }
    if (rows + (g.end - g.begin) > cfg.capacity) {
      ++stats.rejected_capacity;
      continue;
    }
    accept(scan, g);
    rows += g.end - g.begin;
    ++stats.accepted;
  }
  return stats;
}

Buffer::Buffer(Posterior prior, BufferConfig cfg) : cfg_(cfg), prior_(prior), posterior_(std::move(prior)) {
  cfg_.validate();
}

BufferUpdateStats Buffer::update(const SurfaceDataset& scan, const FeatureNet& net) {
  auto variance = [&](const Vec2& z) { return predictive_variance(posterior_, net.forward(z)); };
  auto accept = [&](const SurfaceDataset& src, AnchorGroup g) {
    const std::span<const SurfaceSample> group(src.samples.data() + g.begin, g.end - g.begin);
    posterior_ = posterior_update(posterior_, group, net);
    SurfaceDataset piece;
    piece.samples.assign(group.begin(), group.end());
    append_dataset(data_, piece);
  };
  return select_anchors(scan, cfg_, data_.size(), variance, accept);
}

std::string buffer_to_csv(const Buffer& buf) { return dataset_to_csv(buf.data()); }

}  // namespace cbfmeta
