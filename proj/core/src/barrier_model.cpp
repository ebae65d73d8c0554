#include "cbfmeta/barrier_model.hpp"

#include <cmath>

namespace cbfmeta {

BlrBarrier::BlrBarrier(std::shared_ptr<const FeatureNet> net, Posterior post, double beta)
    : net_(std::move(net)), post_(std::move(post)), beta_(beta) {}

BarrierEval BlrBarrier::evaluate(const Vec2& z) const {
  Eigen::VectorXd phi;
  Eigen::MatrixXd jac;
  net_->forward_with_jacobian(z, phi, jac);
  const Eigen::VectorXd q = post_.solve(phi);
  const double s = std::sqrt(std::max(0.0, phi.dot(q)));
  BarrierEval out;
  out.mean = post_.mean().dot(phi);
  out.variance = post_.sigma() * post_.sigma() * (1.0 + s * s);
  out.value = out.mean - beta_ * s;
  out.gradient = jac.transpose() * post_.mean();
  if (s > kGradNormEpsilon) {
    out.gradient -= beta_ * (jac.transpose() * q) / s;
  } else {
    out.mean_only_gradient = true;
  }
  return out;
}

BarrierEval GpBarrier::evaluate(const Vec2& z) const {
  const GpPrediction p = model_.predict(z);
  return {p.lower, p.lower_gradient, p.mean, p.variance, false};
}

}  // namespace cbfmeta
