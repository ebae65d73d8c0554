#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cbfmeta/environment.hpp"

namespace cbfmeta {

enum class Activation { Tanh, Relu, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Architecture of the basis network R^2 -> R^d. Every layer, the output
/// layer included, applies the activation.
struct NetSpec {
  int input_dim = 2;
  std::vector<int> hidden{256, 256, 256};
  int output_dim = 32;
  Activation activation = Activation::Tanh;

  void validate() const;
  bool operator==(const NetSpec&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Activations of every layer for a batch, kept for the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // [0] is the input batch, back() the output

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

/// Feed-forward basis network phi_w. Parameters are stored per layer and can
/// be viewed as one flat vector w (per layer: weight column-major, then bias).
class FeatureNet {
 public:
  FeatureNet() : FeatureNet(NetSpec{}) {}
  /// All parameters zero.
  explicit FeatureNet(NetSpec spec);

  /// Uniform fan-in initialisation U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static FeatureNet random(const NetSpec& spec, std::uint64_t seed);

  const NetSpec& spec() const { return spec_; }
  int output_dim() const { return spec_.output_dim; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  std::size_t parameter_count() const;
  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& w);

  Eigen::VectorXd forward(const Vec2& z) const;

  /// Z is input_dim x N; returns output_dim x N.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& Z) const;
  ForwardCache forward_cached(const Eigen::MatrixXd& Z) const;

  /// d x 2 Jacobian of forward() with respect to z.
  Eigen::MatrixXd input_jacobian(const Vec2& z) const;

  /// Features and their input Jacobian from one pass.
  void forward_with_jacobian(const Vec2& z, Eigen::VectorXd& phi, Eigen::MatrixXd& jac) const;

  /// Gradient over w of sum_n adjoints(:, n) . phi(Z(:, n)). adjoints is d x N.
  Eigen::VectorXd parameter_gradient(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& adjoints) const;
  Eigen::VectorXd parameter_gradient(const ForwardCache& cache, const Eigen::MatrixXd& adjoints) const;

 private:
  NetSpec spec_;
  std::vector<DenseLayer> layers_;
};

/// Stacks sample points column-wise into a 2 x N matrix.
template <class Range, class Proj>
Eigen::MatrixXd stack_points(const Range& range, Proj proj) {
  Eigen::MatrixXd Z(2, static_cast<Eigen::Index>(std::size(range)));
  Eigen::Index i = 0;
  for (const auto& item : range) Z.col(i++) = proj(item);
  return Z;
}

// Checkpoint container (.fnet): 8-byte magic, u32 version, u64 header length,
// JSON header (NetSpec, layer offsets, optional prior block), then the payload
// as little-endian IEEE-754 doubles.
std::vector<std::uint8_t> save_net(const FeatureNet& net);
FeatureNet load_net(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace cbfmeta
