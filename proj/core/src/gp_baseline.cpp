#include "cbfmeta/gp_baseline.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "cbfmeta/error.hpp"

namespace cbfmeta {

namespace {

Eigen::MatrixXd gram(const Eigen::MatrixXd& X, const GpHyper& h) {
  const Eigen::Index n = X.cols();
  Eigen::MatrixXd K(n, n);
  const double inv = 1.0 / (2.0 * h.length_scale * h.length_scale);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = h.signal_var + h.noise_var;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = h.signal_var * std::exp(-(X.col(i) - X.col(j)).squaredNorm() * inv);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

double log_space(const Interval& r, int k, int count) {
  if (count <= 1) return std::sqrt(r.lo * r.hi);
  const double a = std::log(r.lo);
  const double b = std::log(r.hi);
  return std::exp(a + (b - a) * k / (count - 1));
}

}  // namespace

void GpSearchConfig::validate() const {
  for (const auto* r : {&signal_var, &length_scale, &noise_var}) {
    if (!(r->lo > 0.0 && r->hi >= r->lo)) throw Error(ErrorCode::ConfigInvalid, "gp search ranges must be positive");
  }
  if (grid_signal < 1 || grid_length < 1 || grid_noise < 1 || refine_rounds < 0 || refine_evals < 0) {
    throw Error(ErrorCode::ConfigInvalid, "gp grid sizes must be >= 1");
  }
  if (max_points == 0 || search_points == 0) throw Error(ErrorCode::ConfigInvalid, "gp point caps must be >= 1");
}

GpModel::GpModel(Eigen::MatrixXd X, Eigen::VectorXd y, GpHyper hyper)
    : X_(std::move(X)), y_(std::move(y)), hyper_(hyper) {
  if (X_.rows() != 2 || X_.cols() != y_.size()) throw Error(ErrorCode::DomainError, "gp inputs must be 2 x n");
  if (!(hyper_.signal_var > 0.0 && hyper_.length_scale > 0.0 && hyper_.noise_var > 0.0)) {
    throw Error(ErrorCode::DomainError, "gp hyperparameters must be positive");
  }
  if (y_.size() == 0) return;
  llt_.compute(gram(X_, hyper_));
  if (llt_.info() != Eigen::Success) throw Error(ErrorCode::IllConditioned, "gp kernel matrix is not SPD");
  alpha_ = llt_.solve(y_);
  if (!alpha_.allFinite()) throw Error(ErrorCode::IllConditioned, "gp kernel solve is not finite");
}

double GpModel::kernel(const Vec2& a, const Vec2& b) const {
  return hyper_.signal_var * std::exp(-(a - b).squaredNorm() / (2.0 * hyper_.length_scale * hyper_.length_scale));
}

GpPrediction GpModel::predict(const Vec2& z) const {
  GpPrediction out;
  out.variance = hyper_.signal_var;
  if (!empty()) {
    const Eigen::Index n = X_.cols();
    Eigen::VectorXd k(n);
    Eigen::MatrixXd dk(2, n);
    const double l2 = hyper_.length_scale * hyper_.length_scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      k(i) = kernel(z, X_.col(i));
      dk.col(i) = -k(i) * (z - X_.col(i)) / l2;
    }
    const Eigen::VectorXd v = llt_.solve(k);
    out.mean = k.dot(alpha_);
    out.mean_gradient = dk * alpha_;
    out.variance = std::max(0.0, hyper_.signal_var - k.dot(v));
    const double sd = std::sqrt(out.variance);
    out.lower = out.mean - 2.0 * sd;
    // d var = -2 dk K^-1 k; d(2 sd) = d var / sd.
    const Vec2 dvar = -2.0 * dk * v;
    out.lower_gradient = out.mean_gradient - (sd > 1e-150 ? Vec2(dvar / sd) : Vec2::Zero());
    return out;
  }
  out.lower = -2.0 * std::sqrt(out.variance);
  return out;
}

double GpModel::log_marginal_likelihood() const {
  if (empty()) return 0.0;
  const double logdet = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  return -0.5 * y_.dot(alpha_) - 0.5 * logdet - 0.5 * static_cast<double>(y_.size()) * std::log(2.0 * std::numbers::pi);
}

double gp_log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpHyper& h) {
  Eigen::LLT<Eigen::MatrixXd> llt(gram(X, h));
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(y);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double v = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
  return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
}

std::vector<std::size_t> even_subsample(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (n <= cap) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  idx.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) idx.push_back(k * n / cap);
  return idx;
}

GpModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpSearchConfig& cfg) {
  cfg.validate();
  if (y.size() == 0) throw Error(ErrorCode::DomainError, "gp_fit needs at least one point");
  auto take = [&](const std::vector<std::size_t>& idx, Eigen::MatrixXd& Xs, Eigen::VectorXd& ys) {
    Xs.resize(2, static_cast<Eigen::Index>(idx.size()));
    ys.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Xs.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(idx[k]));
      ys(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(idx[k]));
    }
  };
  const auto n = static_cast<std::size_t>(y.size());
  Eigen::MatrixXd Xt;
  Eigen::VectorXd yt;
  take(even_subsample(n, cfg.max_points), Xt, yt);
  Eigen::MatrixXd Xs;
  Eigen::VectorXd ys;
  take(even_subsample(n, std::min(cfg.search_points, cfg.max_points)), Xs, ys);

  // Search in log space over (signal, length, noise).
  const std::array<Interval, 3> ranges{cfg.signal_var, cfg.length_scale, cfg.noise_var};
  auto to_hyper = [](const std::array<double, 3>& l) { return GpHyper{std::exp(l[0]), std::exp(l[1]), std::exp(l[2])}; };
  auto score = [&](const std::array<double, 3>& l) { return gp_log_marginal_likelihood(Xs, ys, to_hyper(l)); };

  std::array<double, 3> best{};
  double best_val = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (int a = 0; a < cfg.grid_signal; ++a) {
    for (int b = 0; b < cfg.grid_length; ++b) {
      for (int c = 0; c < cfg.grid_noise; ++c) {
        const std::array<double, 3> l{std::log(log_space(ranges[0], a, cfg.grid_signal)),
                                      std::log(log_space(ranges[1], b, cfg.grid_length)),
                                      std::log(log_space(ranges[2], c, cfg.grid_noise))};
        const double v = score(l);
        if (!found || v > best_val) {
          best_val = v;
          best = l;
          found = std::isfinite(v);
        }
      }
    }
  }
  if (!found) throw Error(ErrorCode::IllConditioned, "no grid point gave an SPD kernel matrix");

  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int round = 0; round < cfg.refine_rounds; ++round) {
    for (int dim = 0; dim < 3; ++dim) {
      const double span = (std::log(ranges[static_cast<std::size_t>(dim)].hi) -
                           std::log(ranges[static_cast<std::size_t>(dim)].lo)) /
                          std::pow(2.0, round + 1);
      double lo = std::max(std::log(ranges[static_cast<std::size_t>(dim)].lo), best[static_cast<std::size_t>(dim)] - span);
      double hi = std::min(std::log(ranges[static_cast<std::size_t>(dim)].hi), best[static_cast<std::size_t>(dim)] + span);
      auto at = [&](double t) {
        auto l = best;
        l[static_cast<std::size_t>(dim)] = t;
        return score(l);
      };
      double x1 = hi - phi * (hi - lo);
      double x2 = lo + phi * (hi - lo);
      double f1 = at(x1);
      double f2 = at(x2);
      for (int e = 0; e < cfg.refine_evals; ++e) {
        if (f1 >= f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - phi * (hi - lo);
          f1 = at(x1);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + phi * (hi - lo);
          f2 = at(x2);
        }
      }
      const double cand = f1 >= f2 ? x1 : x2;
      const double cv = std::max(f1, f2);
      // Bounds are candidates too, so a boundary optimum is reached exactly.
      const double blo = at(std::log(ranges[static_cast<std::size_t>(dim)].lo));
      if (cv > best_val) {
        best_val = cv;
        best[static_cast<std::size_t>(dim)] = cand;
      }
      if (blo > best_val) {
        best_val = blo;
        best[static_cast<std::size_t>(dim)] = std::log(ranges[static_cast<std::size_t>(dim)].lo);
      }
    }
  }
  auto h = to_hyper(best);
  // exp(log(x)) may land an ulp outside the box.
  h.signal_var = std::clamp(h.signal_var, cfg.signal_var.lo, cfg.signal_var.hi);
  h.length_scale = std::clamp(h.length_scale, cfg.length_scale.lo, cfg.length_scale.hi);
  h.noise_var = std::clamp(h.noise_var, cfg.noise_var.lo, cfg.noise_var.hi);
  return GpModel(std::move(Xt), std::move(yt), h);
}

GpModel gp_fit(const SurfaceDataset& data, const GpSearchConfig& cfg) {
  Eigen::MatrixXd X(2, static_cast<Eigen::Index>(data.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    X.col(static_cast<Eigen::Index>(i)) = data.samples[i].z;
    y(static_cast<Eigen::Index>(i)) = data.samples[i].label;
  }
  return gp_fit(X, y, cfg);
}

GpPrediction gp_predict_bounds(const GpModel& model, const Vec2& z) { return model.predict(z); }

}  // namespace cbfmeta
