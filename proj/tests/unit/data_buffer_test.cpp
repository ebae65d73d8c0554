#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "cbfmeta/data_buffer.hpp"
#include "cbfmeta/error.hpp"

namespace cbfmeta {
namespace {

struct Fixture {
  EnvironmentSpec env;
  FeatureNet net;
  Posterior prior;
  SurfaceDataset scan_a;
  SurfaceDataset scan_b;

  Fixture() {
    env.obstacles.push_back(Obstacle::ellipse({{0.6, 0.4}, {1.5, 0.2}, 0.5}));
    NetSpec spec;
    spec.hidden = {32, 32};
    spec.output_dim = 16;
    net = FeatureNet::random(spec, 3);
    prior = Posterior::isotropic(16, 0.001, 1e-2);
    std::mt19937_64 rng(5);
    scan_a = build_offset_dataset(cast_scan(env, {}, LidarConfig{}, rng), {});
    scan_b = build_offset_dataset(cast_scan(env, {}, LidarConfig{}, rng), {});
  }
};

TEST(Buffer, FirstAnchorAccepted) {
  Fixture f;
  const double var0 = predict(f.prior, anchor_sample(f.scan_a, anchor_groups(f.scan_a)[0]).z, f.net).variance;
  BufferConfig cfg;
  cfg.eta = 0.5 * var0;
  Buffer buf(f.prior, cfg);
  const auto stats = buf.update(f.scan_a, f.net);
  EXPECT_GE(stats.accepted, 1u);
  EXPECT_EQ(buf.data().samples.front().z, f.scan_a.samples.front().z);
  EXPECT_EQ(stats.anchors_seen, anchor_groups(f.scan_a).size());
}

TEST(Buffer, InfiniteThresholdAcceptsNothing) {
  Fixture f;
  BufferConfig cfg;
  cfg.eta = std::numeric_limits<double>::infinity();
  Buffer buf(f.prior, cfg);
  const auto stats = buf.update(f.scan_a, f.net);
  EXPECT_EQ(stats.accepted, 0u);
  EXPECT_EQ(buf.size(), 0u);
  EXPECT_EQ(buf.posterior().mean(), f.prior.mean());
  EXPECT_EQ(buf.posterior().precision(), f.prior.precision());
}

TEST(Buffer, RescanAcceptsFewAnchors) {
  Fixture f;
  BufferConfig cfg;
  cfg.eta = 2.0 * 0.001 * 0.001;
  Buffer buf(f.prior, cfg);
  const auto first = buf.update(f.scan_a, f.net);
  const auto second = buf.update(f.scan_b, f.net);
  ASSERT_GT(first.accepted, 0u);
  EXPECT_LE(static_cast<double>(second.accepted), 0.1 * static_cast<double>(first.accepted));
}

TEST(Buffer, PosteriorMatchesStoredData) {
  Fixture f;
  Buffer buf(f.prior, BufferConfig{});
  buf.update(f.scan_a, f.net);
  buf.update(f.scan_b, f.net);
  const auto batch = posterior_update(f.prior, buf.data().samples, f.net);
  EXPECT_LT((batch.precision() - buf.posterior().precision()).norm() / batch.precision().norm(), 1e-10);
  EXPECT_LT((batch.mean() - buf.posterior().mean()).norm() / batch.mean().norm(), 1e-6);
}

TEST(Buffer, CapacityCounted) {
  Fixture f;
  BufferConfig cfg;
  cfg.eta = 0.0;
  cfg.capacity = 20;
  Buffer buf(f.prior, cfg);
  const auto stats = buf.update(f.scan_a, f.net);
  EXPECT_EQ(stats.accepted, 2u);  // 7 rows per anchor
  EXPECT_LE(buf.size(), 20u);
  EXPECT_EQ(stats.rejected_capacity, stats.anchors_seen - 2);
}

TEST(Buffer, SelectAnchorsWalksInOrder) {
  Fixture f;
  std::vector<std::size_t> firsts;
  const auto stats = select_anchors(
      f.scan_a, BufferConfig{}, 0, [](const Vec2& z) { return z.y() > 0.2 ? 1.0 : 0.0; },
      [&](const SurfaceDataset& src, AnchorGroup g) { firsts.push_back(g.begin); (void)src; });
  EXPECT_EQ(stats.accepted, firsts.size());
  EXPECT_EQ(stats.accepted + stats.rejected_variance, stats.anchors_seen);
  EXPECT_TRUE(std::is_sorted(firsts.begin(), firsts.end()));
}

TEST(Buffer, RejectsBadConfig) {
  BufferConfig cfg;
  cfg.eta = -1.0;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace cbfmeta
