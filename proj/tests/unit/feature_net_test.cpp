#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "cbfmeta/checkpoint.hpp"
#include "cbfmeta/error.hpp"
#include "cbfmeta/feature_net.hpp"
#include "test_util.hpp"

namespace cbfmeta {
namespace {

using testing::fd_gradient;
using testing::rel_error;

NetSpec small_spec(Activation a = Activation::Tanh) {
  NetSpec s;
  s.hidden = {8, 6};
  s.output_dim = 4;
  s.activation = a;
  return s;
}

TEST(FeatureNet, ZeroNetGivesZero) {
  const FeatureNet net(small_spec());
  EXPECT_EQ(net.forward({0.3, -0.7}).norm(), 0.0);
  EXPECT_EQ(net.input_jacobian({0.3, -0.7}).norm(), 0.0);
}

TEST(FeatureNet, SingleLayerByHand) {
  NetSpec s;
  s.hidden = {};
  s.output_dim = 2;
  FeatureNet net(s);
  auto& l = net.mutable_layers().at(0);
  l.weight << 1.0, 2.0, -0.5, 0.25;
  l.bias << 0.1, -0.2;
  const Vec2 z(0.3, -0.4);
  const Eigen::Vector2d pre = l.weight * z + l.bias;
  const auto out = net.forward(z);
  EXPECT_DOUBLE_EQ(out(0), std::tanh(pre(0)));
  EXPECT_DOUBLE_EQ(out(1), std::tanh(pre(1)));
}

TEST(FeatureNet, BatchMatchesPointwise) {
  const auto net = FeatureNet::random(small_spec(), 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd Z(2, 100);
  for (int i = 0; i < 100; ++i) Z.col(i) = Vec2(n01(rng), n01(rng));
  const Eigen::MatrixXd batch = net.forward_batch(Z);
  for (int i = 0; i < 100; ++i) EXPECT_LT((batch.col(i) - net.forward(Z.col(i))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FeatureNet, JacobianMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto net = FeatureNet::random(small_spec(), seed);
    const Vec2 z(0.1 * seed - 0.4, 0.3);
    const Eigen::MatrixXd J = net.input_jacobian(z);
    for (int k = 0; k < net.output_dim(); ++k) {
      const auto fd = fd_gradient([&](const Eigen::VectorXd& x) { return net.forward(Vec2(x(0), x(1)))(k); }, z);
      EXPECT_LT(rel_error(J.row(k).transpose(), fd), 1e-6);
    }
    Eigen::VectorXd phi;
    Eigen::MatrixXd J2;
    net.forward_with_jacobian(z, phi, J2);
    EXPECT_LT((J2 - J).norm(), 1e-14);
    EXPECT_LT((phi - net.forward(z)).norm(), 1e-14);
  }
}

TEST(FeatureNet, LinearNetJacobianIsWeightProduct) {
  const auto net = FeatureNet::random(small_spec(Activation::Identity), 1);
  Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(2, 2);
  for (const auto& l : net.layers()) prod = l.weight * prod;
  EXPECT_LT((net.input_jacobian({0.5, 0.5}) - prod).norm(), 1e-12);
}

TEST(FeatureNet, ParameterGradientZeroAdjoint) {
  const auto net = FeatureNet::random(small_spec(), 2);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Random(2, 3);
  EXPECT_EQ(net.parameter_gradient(Z, Eigen::MatrixXd::Zero(4, 3)).norm(), 0.0);
}

TEST(FeatureNet, ParameterGradientMatchesFiniteDifferences) {
  for (Activation a : {Activation::Tanh, Activation::Identity}) {
    NetSpec s;
    s.hidden = {3};
    s.output_dim = 1;
    s.activation = a;
    auto net = FeatureNet::random(s, 8);
    const Eigen::MatrixXd Z = Eigen::Vector2d(0.4, -0.3);
    const Eigen::MatrixXd adj = Eigen::MatrixXd::Constant(1, 1, 1.3);
    const Eigen::VectorXd g = net.parameter_gradient(Z, adj);
    const auto fd = fd_gradient(
        [&](const Eigen::VectorXd& w) {
          FeatureNet copy = net;
          copy.set_flat(w);
          return (adj.array() * copy.forward_batch(Z).array()).sum();
        },
        net.flat());
    EXPECT_LT(rel_error(g, fd), 1e-6);
  }
}

TEST(FeatureNet, ParameterGradientIsLinearInBatch) {
  const auto net = FeatureNet::random(small_spec(), 5);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Random(2, 5);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Random(4, 5);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  for (int i = 0; i < 5; ++i) sum += net.parameter_gradient(Eigen::MatrixXd(Z.col(i)), Eigen::MatrixXd(A.col(i)));
  EXPECT_LT(rel_error(net.parameter_gradient(Z, A), sum), 1e-12);
}

TEST(FeatureNet, FlatRoundTrip) {
  auto net = FeatureNet::random(small_spec(), 6);
  const Eigen::VectorXd w = net.flat();
  EXPECT_EQ(static_cast<std::size_t>(w.size()), net.parameter_count());
  FeatureNet other(small_spec());
  other.set_flat(w);
  EXPECT_EQ(other.flat(), w);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const auto net = FeatureNet::random(small_spec(), 7);
  const auto back = load_net(save_net(net));
  EXPECT_EQ(back.spec(), net.spec());
  EXPECT_EQ(back.flat(), net.flat());
}

TEST(Checkpoint, TruncatedRejected) {
  auto bytes = save_net(FeatureNet::random(small_spec(), 7));
  bytes.resize(bytes.size() - 8);
  try {
    load_net(bytes);
    FAIL() << "expected FormatMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatMismatch);
  }
}

TEST(Checkpoint, HeaderDimensionMismatchRejected) {
  auto bytes = save_net(FeatureNet::random(small_spec(), 7));
  const std::string text(bytes.begin(), bytes.end());
  const std::string key = "\"output_dim\":4";
  const auto pos = text.find(key);
  ASSERT_NE(pos, std::string::npos);
  bytes[pos + key.size() - 1] = '5';
  EXPECT_THROW(load_net(bytes), Error);
  try {
    load_net(bytes);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatMismatch);
  }
}

TEST(Checkpoint, BundleRoundTrip) {
  ModelBundle b{FeatureNet::random(small_spec(), 1), Posterior(Eigen::VectorXd::LinSpaced(4, -1, 1),
                                                             2.0 * Eigen::MatrixXd::Identity(4, 4), 0.01)};
  const auto back = load_bundle(save_bundle(b));
  EXPECT_EQ(back.net.flat(), b.net.flat());
  EXPECT_EQ(back.prior.mean(), b.prior.mean());
  EXPECT_EQ(back.prior.precision(), b.prior.precision());
  EXPECT_EQ(back.prior.sigma(), b.prior.sigma());
  try {
    load_bundle(save_net(b.net));
    FAIL() << "expected FormatMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatMismatch);
  }
}

}  // namespace
}  // namespace cbfmeta
