#pragma once

#include <memory>

#include "cbfmeta/bayes_blr.hpp"
#include "cbfmeta/feature_net.hpp"
#include "cbfmeta/gp_baseline.hpp"

namespace cbfmeta {

struct BarrierEval {
  double value = 0.0;  // lower bound h^b(z)
  Vec2 gradient = Vec2::Zero();
  double mean = 0.0;
  double variance = 0.0;
  bool mean_only_gradient = false;  // confidence-term gradient was undefined
};

/// Snapshot of a learned signed-distance lower bound for one obstacle.
class BarrierModel {
 public:
  virtual ~BarrierModel() = default;
  virtual BarrierEval evaluate(const Vec2& z) const = 0;
};

/// h^b = mean - beta ||phi||_{precision^-1} from a last-layer posterior.
class BlrBarrier final : public BarrierModel {
 public:
  BlrBarrier(std::shared_ptr<const FeatureNet> net, Posterior post, double beta);
  BarrierEval evaluate(const Vec2& z) const override;

  const Posterior& posterior() const { return post_; }
  double beta() const { return beta_; }

 private:
  std::shared_ptr<const FeatureNet> net_;
  Posterior post_;
  double beta_;
};

/// h^b = mean - 2 sd from a fitted GP.
class GpBarrier final : public BarrierModel {
 public:
  explicit GpBarrier(GpModel model) : model_(std::move(model)) {}
  BarrierEval evaluate(const Vec2& z) const override;

  const GpModel& model() const { return model_; }

 private:
  GpModel model_;
};

}  // namespace cbfmeta
