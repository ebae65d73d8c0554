#pragma once

#include <span>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cbfmeta/feature_net.hpp"
#include "cbfmeta/surface_dataset.hpp"

namespace cbfmeta {

/// Gaussian belief over last-layer coefficients: theta ~ N(mean, sigma^2 precision^-1).
/// Immutable; updates return new snapshots. The Cholesky factor of the
/// precision is computed once at construction.
class Posterior {
 public:
  Posterior() = default;
  /// Throws Error(NumericalBreakdown) when precision is not SPD or not symmetric.
  Posterior(Eigen::VectorXd mean, Eigen::MatrixXd precision, double sigma);

  /// mean 0, precision = scale * I.
  static Posterior isotropic(int dim, double sigma, double precision_scale = 1.0);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& precision() const { return precision_; }
  double sigma() const { return sigma_; }
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }

  /// precision^-1 * v via the triangular factor.
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const { return llt_.solve(v); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& m) const { return llt_.solve(m); }

  /// a^T precision^-1 a.
  double inv_quad(const Eigen::VectorXd& a) const;

  double log_det_precision() const;

  /// Bayesian linear regression update with feature rows Phi (n x d) and
  /// targets G (n). An empty batch returns an identical snapshot.
  Posterior update(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& G) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd precision_;
  double sigma_ = 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  Eigen::VectorXd basis;
};

/// Features for a batch of samples as an n x d row matrix.
Eigen::MatrixXd feature_rows(const FeatureNet& net, std::span<const SurfaceSample> batch);

Posterior posterior_update(const Posterior& current, std::span<const SurfaceSample> batch,
                           const FeatureNet& net);

Prediction predict(const Posterior& post, const Vec2& z, const FeatureNet& net);

/// Predictive variance sigma^2 (1 + phi^T precision^-1 phi) for a given basis vector.
double predictive_variance(const Posterior& post, const Eigen::VectorXd& phi);

/// Regularised lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

/// p-th quantile of the chi-square distribution with d degrees of freedom.
double chi_square_quantile(int d, double p);

/// Confidence radius beta for the coefficient error |a^T(mean - theta*)| <=
/// ||a||_{precision^-1} beta holding with probability 1 - 2 delta.
/// Throws Error(DomainError) when the log-determinant radicand is negative.
double confidence_radius(const Posterior& post, const Posterior& prior, double delta);

/// Largest and smallest eigenvalue of a symmetric matrix.
std::pair<double, double> extreme_eigenvalues(const Eigen::MatrixXd& m);

/// h^b(z) = mean(z) - ||phi(z)||_{precision^-1} beta.
double cbf_lower_bound(const Posterior& post, double beta, const Vec2& z, const FeatureNet& net);
double cbf_lower_bound(const Posterior& post, const Posterior& prior, double delta, const Vec2& z,
                       const FeatureNet& net);

inline constexpr double kGradNormEpsilon = 1e-12;

/// Spatial gradient of h^b. Throws Error(NearSingularNorm) when
/// ||phi||_{precision^-1} <= kGradNormEpsilon.
Vec2 cbf_lower_bound_gradient(const Posterior& post, double beta, const Vec2& z,
                              const FeatureNet& net);

/// Mean Gaussian negative log-likelihood of labeled samples.
double negative_log_likelihood(const Posterior& post, std::span<const SurfaceSample> testset,
                               const FeatureNet& net);

}  // namespace cbfmeta
