#include "cbfmeta/feature_net.hpp"

#include <cmath>
#include <random>

#include "cbfmeta/error.hpp"

namespace cbfmeta {

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& m) {
  switch (act) {
    case Activation::Tanh: m = m.array().tanh().matrix(); break;
    case Activation::Relu: m = m.cwiseMax(0.0); break;
    case Activation::Identity: break;
  }
}

// Derivative of the activation expressed through its output.
Eigen::MatrixXd activation_slope(Activation act, const Eigen::MatrixXd& out) {
  switch (act) {
    case Activation::Tanh: return (1.0 - out.array().square()).matrix();
    case Activation::Relu: return (out.array() > 0.0).cast<double>().matrix();
    case Activation::Identity: break;
  }
  return Eigen::MatrixXd::Ones(out.rows(), out.cols());
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw Error(ErrorCode::ConfigInvalid, "unknown activation: " + s);
}

void NetSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw Error(ErrorCode::ConfigInvalid, "net dims must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw Error(ErrorCode::ConfigInvalid, "hidden widths must be >= 1");
  }
}

FeatureNet::FeatureNet(NetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  int in = spec_.input_dim;
  auto add = [&](int out) {
    layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    in = out;
  };
  for (int h : spec_.hidden) add(h);
  add(spec_.output_dim);
}

FeatureNet FeatureNet::random(const NetSpec& spec, std::uint64_t seed) {
  FeatureNet net(spec);
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = u(rng);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = u(rng);
  }
  return net;
}

std::size_t FeatureNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd FeatureNet::flat() const {
  Eigen::VectorXd w(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index off = 0;
  for (const auto& l : layers_) {
    w.segment(off, l.weight.size()) = l.weight.reshaped();
    off += l.weight.size();
    w.segment(off, l.bias.size()) = l.bias;
    off += l.bias.size();
  }
  return w;
}

void FeatureNet::set_flat(const Eigen::VectorXd& w) {
  if (w.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw Error(ErrorCode::DomainError, "flat parameter vector has wrong length");
  }
  Eigen::Index off = 0;
  for (auto& l : layers_) {
    l.weight.reshaped() = w.segment(off, l.weight.size());
    off += l.weight.size();
    l.bias = w.segment(off, l.bias.size());
    off += l.bias.size();
  }
}

Eigen::VectorXd FeatureNet::forward(const Vec2& z) const {
  Eigen::MatrixXd a = z;
  for (const auto& l : layers_) {
    Eigen::MatrixXd pre = l.weight * a + l.bias;
    apply_activation(spec_.activation, pre);
    a = std::move(pre);
  }
  return a.col(0);
}

Eigen::MatrixXd FeatureNet::forward_batch(const Eigen::MatrixXd& Z) const {
  Eigen::MatrixXd a = Z;
  for (const auto& l : layers_) {
    Eigen::MatrixXd pre = l.weight * a;
    pre.colwise() += l.bias;
    apply_activation(spec_.activation, pre);
    a = std::move(pre);
  }
  return a;
}

ForwardCache FeatureNet::forward_cached(const Eigen::MatrixXd& Z) const {
  ForwardCache cache;
  cache.activations.reserve(layers_.size() + 1);
  cache.activations.push_back(Z);
  for (const auto& l : layers_) {
    Eigen::MatrixXd pre = l.weight * cache.activations.back();
    pre.colwise() += l.bias;
    apply_activation(spec_.activation, pre);
    cache.activations.push_back(std::move(pre));
  }
  return cache;
}

void FeatureNet::forward_with_jacobian(const Vec2& z, Eigen::VectorXd& phi, Eigen::MatrixXd& jac) const {
  // Forward-mode: carry d(activation)/dz alongside the activation.
  Eigen::VectorXd a = z;
  Eigen::MatrixXd tangent = Eigen::MatrixXd::Identity(spec_.input_dim, spec_.input_dim);
  for (const auto& l : layers_) {
    Eigen::MatrixXd pre = l.weight * a + l.bias;
    apply_activation(spec_.activation, pre);
    const Eigen::MatrixXd slope = activation_slope(spec_.activation, pre);
    tangent = slope.col(0).asDiagonal() * (l.weight * tangent);
    a = pre.col(0);
  }
  phi = std::move(a);
  jac = std::move(tangent);
}

Eigen::MatrixXd FeatureNet::input_jacobian(const Vec2& z) const {
  Eigen::VectorXd phi;
  Eigen::MatrixXd jac;
  forward_with_jacobian(z, phi, jac);
  return jac;
}

Eigen::VectorXd FeatureNet::parameter_gradient(const Eigen::MatrixXd& Z,
                                               const Eigen::MatrixXd& adjoints) const {
  return parameter_gradient(forward_cached(Z), adjoints);
}

Eigen::VectorXd FeatureNet::parameter_gradient(const ForwardCache& cache,
                                               const Eigen::MatrixXd& adjoints) const {
  if (adjoints.rows() != spec_.output_dim || adjoints.cols() != cache.output().cols()) {
    throw Error(ErrorCode::DomainError, "adjoint shape does not match the batch");
  }
  Eigen::VectorXd grad(static_cast<Eigen::Index>(parameter_count()));
  // Offsets of each layer's block in the flat vector.
  std::vector<Eigen::Index> offsets(layers_.size());
  Eigen::Index off = 0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    offsets[k] = off;
    off += layers_[k].weight.size() + layers_[k].bias.size();
  }
  Eigen::MatrixXd delta =
      adjoints.cwiseProduct(activation_slope(spec_.activation, cache.activations.back()));
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const Eigen::MatrixXd& input = cache.activations[k];
    Eigen::MatrixXd gw = delta * input.transpose();
    grad.segment(offsets[k], l.weight.size()) = gw.reshaped();
    grad.segment(offsets[k] + l.weight.size(), l.bias.size()) = delta.rowwise().sum();
    if (k > 0) {
      delta = (l.weight.transpose() * delta).cwiseProduct(activation_slope(spec_.activation, input));
    }
  }
  return grad;
}

}  // namespace cbfmeta
