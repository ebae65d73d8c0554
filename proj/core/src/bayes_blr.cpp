#include "cbfmeta/bayes_blr.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "cbfmeta/error.hpp"

namespace cbfmeta {

Posterior::Posterior(Eigen::VectorXd mean, Eigen::MatrixXd precision, double sigma)
    : mean_(std::move(mean)), precision_(std::move(precision)), sigma_(sigma) {
  if (precision_.rows() != precision_.cols() || precision_.rows() != mean_.size()) {
    throw Error(ErrorCode::DomainError, "posterior mean/precision dimension mismatch");
  }
  if (!(sigma_ > 0.0)) throw Error(ErrorCode::DomainError, "noise scale sigma must be > 0");
  if (!precision_.allFinite() || !mean_.allFinite()) {
    throw Error(ErrorCode::NumericalBreakdown, "non-finite posterior parameters");
  }
  const double asym = (precision_ - precision_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * std::max(1.0, precision_.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::NumericalBreakdown, "precision matrix is not symmetric");
  }
  llt_.compute(precision_);
  if (llt_.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalBreakdown, "precision matrix is not positive definite");
  }
}

Posterior Posterior::isotropic(int dim, double sigma, double precision_scale) {
  return Posterior(Eigen::VectorXd::Zero(dim), precision_scale * Eigen::MatrixXd::Identity(dim, dim),
                   sigma);
}

double Posterior::inv_quad(const Eigen::VectorXd& a) const {
  const Eigen::VectorXd half = llt_.matrixL().solve(a);
  return half.squaredNorm();
}

double Posterior::log_det_precision() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Posterior Posterior::update(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& G) const {
  if (Phi.rows() != G.size() || (Phi.rows() > 0 && Phi.cols() != dim())) {
    throw Error(ErrorCode::DomainError, "feature batch shape mismatch");
  }
  if (Phi.rows() == 0) return *this;
  Eigen::MatrixXd next = precision_;
  next.selfadjointView<Eigen::Lower>().rankUpdate(Phi.transpose());
  next.triangularView<Eigen::StrictlyUpper>() = next.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(next);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalBreakdown, "updated precision is not positive definite");
  }
  Eigen::VectorXd rhs = Phi.transpose() * G + precision_ * mean_;
  return Posterior(llt.solve(rhs), std::move(next), sigma_);
}

Eigen::MatrixXd feature_rows(const FeatureNet& net, std::span<const SurfaceSample> batch) {
  const Eigen::MatrixXd Z = stack_points(batch, [](const SurfaceSample& s) { return s.z; });
  return net.forward_batch(Z).transpose();
}

Posterior posterior_update(const Posterior& current, std::span<const SurfaceSample> batch,
                           const FeatureNet& net) {
  if (batch.empty()) return current;
  Eigen::VectorXd G(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) G(static_cast<Eigen::Index>(i)) = batch[i].label;
  return current.update(feature_rows(net, batch), G);
}

double predictive_variance(const Posterior& post, const Eigen::VectorXd& phi) {
  return post.sigma() * post.sigma() * (1.0 + post.inv_quad(phi));
}

Prediction predict(const Posterior& post, const Vec2& z, const FeatureNet& net) {
  Prediction p;
  p.basis = net.forward(z);
  p.mean = post.mean().dot(p.basis);
  p.variance = predictive_variance(post, p.basis);
  return p;
}

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw Error(ErrorCode::DomainError, "incomplete gamma domain");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    // Series expansion.
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-17) break;
    }
    return std::exp(log_prefix) * sum;
  }
  // Continued fraction for Q(a, x) (modified Lentz).
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return 1.0 - std::exp(log_prefix) * h;
}

double chi_square_quantile(int d, double p) {
  if (d < 1 || !(p > 0.0) || !(p < 1.0)) {
    throw Error(ErrorCode::DomainError, "chi-square quantile needs d >= 1 and p in (0, 1)");
  }
  const double k = 0.5 * d;
  auto cdf = [k](double q) { return regularized_gamma_p(k, 0.5 * q); };
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(d));
  while (cdf(hi) < p) {
    lo = hi;
    hi *= 2.0;
  }
  const double log_norm = -k * std::numbers::ln2 - std::lgamma(k);
  double q = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = cdf(q) - p;
    if (std::abs(f) < 1e-15) break;
    if (f < 0.0) lo = q; else hi = q;
    const double pdf = std::exp(log_norm + (k - 1.0) * std::log(q) - 0.5 * q);
    double next = q - f / pdf;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - q) <= 1e-15 * q) {
      q = next;
      break;
    }
    q = next;
  }
  return q;
}

std::pair<double, double> extreme_eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalBreakdown, "symmetric eigensolver failed");
  }
  return {es.eigenvalues().maxCoeff(), es.eigenvalues().minCoeff()};
}

double confidence_radius(const Posterior& post, const Posterior& prior, double delta) {
  if (!(delta > 0.0) || !(delta < 0.5)) throw Error(ErrorCode::DomainError, "delta must lie in (0, 0.5)");
  if (post.dim() != prior.dim() || post.sigma() != prior.sigma()) {
    throw Error(ErrorCode::DomainError, "posterior and prior disagree on dimension or sigma");
  }
  const double log_ratio = 0.5 * (post.log_det_precision() - prior.log_det_precision());
  const double radicand = 2.0 * (std::log(1.0 / delta) + log_ratio);
  if (radicand < 0.0) {
    throw Error(ErrorCode::DomainError, "confidence radius radicand is negative");
  }
  const double lambda_max_prior = extreme_eigenvalues(prior.precision()).first;
  const double lambda_min_post = extreme_eigenvalues(post.precision()).second;
  if (!(lambda_min_post > 0.0)) throw Error(ErrorCode::NumericalBreakdown, "posterior precision not SPD");
  const double chi2 = chi_square_quantile(post.dim(), 1.0 - delta);
  return post.sigma() * (std::sqrt(radicand) + std::sqrt(lambda_max_prior / lambda_min_post * chi2));
}

double cbf_lower_bound(const Posterior& post, double beta, const Vec2& z, const FeatureNet& net) {
  const Eigen::VectorXd phi = net.forward(z);
  return post.mean().dot(phi) - std::sqrt(post.inv_quad(phi)) * beta;
}

double cbf_lower_bound(const Posterior& post, const Posterior& prior, double delta, const Vec2& z,
                       const FeatureNet& net) {
  return cbf_lower_bound(post, confidence_radius(post, prior, delta), z, net);
}

Vec2 cbf_lower_bound_gradient(const Posterior& post, double beta, const Vec2& z,
                              const FeatureNet& net) {
  Eigen::VectorXd phi;
  Eigen::MatrixXd jac;
  net.forward_with_jacobian(z, phi, jac);
  const Eigen::VectorXd scaled = post.solve(phi);
  const double norm = std::sqrt(std::max(0.0, phi.dot(scaled)));
  if (norm <= kGradNormEpsilon) {
    throw Error(ErrorCode::NearSingularNorm, "feature norm too small for the bound gradient");
  }
  return jac.transpose() * post.mean() - beta * (jac.transpose() * scaled) / norm;
}

double negative_log_likelihood(const Posterior& post, std::span<const SurfaceSample> testset,
                               const FeatureNet& net) {
  if (testset.empty()) throw Error(ErrorCode::DomainError, "NLL needs a nonempty test set");
  const Eigen::MatrixXd Phi = feature_rows(net, testset);
  const Eigen::VectorXd mu = Phi * post.mean();
  const Eigen::MatrixXd half = post.factor().matrixL().solve(Phi.transpose());
  const double s2 = post.sigma() * post.sigma();
  double total = 0.0;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double var = s2 * (1.0 + half.col(k).squaredNorm());
    const double r = testset[i].label - mu(k);
    total += 0.5 * (std::log(2.0 * std::numbers::pi * var) + r * r / var);
  }
  return total / static_cast<double>(testset.size());
}

}  // namespace cbfmeta
