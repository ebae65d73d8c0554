#pragma once

#include <cstddef>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cbfmeta/environment.hpp"
#include "cbfmeta/surface_dataset.hpp"

namespace cbfmeta {

struct GpHyper {
  double signal_var = 1.0;
  double length_scale = 0.5;
  double noise_var = 1e-4;
};

struct GpSearchConfig {
  Interval signal_var{1e-2, 10.0};
  Interval length_scale{0.05, 3.0};
  Interval noise_var{1e-8, 1e-2};
  int grid_signal = 7;
  int grid_length = 7;
  int grid_noise = 5;
  int refine_rounds = 3;
  int refine_evals = 16;            // golden-section evaluations per coordinate
  std::size_t max_points = 800;     // training cap
  std::size_t search_points = 400;  // subsample used for the hyperparameter search

  void validate() const;
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;  // latent function variance
  double lower = 0.0;     // mean - 2 sqrt(variance)
  Vec2 mean_gradient = Vec2::Zero();
  Vec2 lower_gradient = Vec2::Zero();
};

/// Zero-mean GP with squared-exponential kernel on 2-D inputs.
class GpModel {
 public:
  GpModel() = default;
  /// Throws Error(IllConditioned) if K + noise I cannot be factorized.
  GpModel(Eigen::MatrixXd X, Eigen::VectorXd y, GpHyper hyper);

  const GpHyper& hyper() const { return hyper_; }
  const Eigen::MatrixXd& inputs() const { return X_; }  // 2 x n
  const Eigen::VectorXd& targets() const { return y_; }
  std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  bool empty() const { return y_.size() == 0; }

  double kernel(const Vec2& a, const Vec2& b) const;
  GpPrediction predict(const Vec2& z) const;
  double log_marginal_likelihood() const;

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  GpHyper hyper_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

/// Log marginal likelihood, or -inf if the kernel matrix is not SPD.
double gp_log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpHyper& h);

/// Evenly spaced subsample of at most `cap` indices out of n.
std::vector<std::size_t> even_subsample(std::size_t n, std::size_t cap);

/// Maximum-likelihood fit over a log grid followed by coordinatewise
/// golden-section refinement in log space. Deterministic.
GpModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpSearchConfig& cfg = {});
GpModel gp_fit(const SurfaceDataset& data, const GpSearchConfig& cfg = {});

GpPrediction gp_predict_bounds(const GpModel& model, const Vec2& z);

}  // namespace cbfmeta
