#include <random>

#include <benchmark/benchmark.h>

#include "cbfmeta/bayes_blr.hpp"
#include "cbfmeta/gp_baseline.hpp"
#include "cbfmeta/meta_train.hpp"
#include "cbfmeta/qp_solver.hpp"
#include "cbfmeta/surface_dataset.hpp"

namespace cbfmeta {
namespace {

std::vector<SurfaceSample> random_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<SurfaceSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 z(u(rng), u(rng));
    out.push_back({z, z.norm() - 0.5, 0, i / 7, 0});
  }
  return out;
}

FeatureNet default_net() { return FeatureNet::random(NetSpec{}, 1); }

void BM_FeatureForward(benchmark::State& state) {
  const auto net = default_net();
  const Vec2 z(0.3, -0.2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(z));
}
BENCHMARK(BM_FeatureForward);

void BM_FeatureForwardJacobian(benchmark::State& state) {
  const auto net = default_net();
  const Vec2 z(0.3, -0.2);
  Eigen::VectorXd phi;
  Eigen::MatrixXd jac;
  for (auto _ : state) {
    net.forward_with_jacobian(z, phi, jac);
    benchmark::DoNotOptimize(jac.data());
  }
}
BENCHMARK(BM_FeatureForwardJacobian);

void BM_PosteriorUpdate(benchmark::State& state) {
  const auto net = default_net();
  const auto prior = Posterior::isotropic(net.output_dim(), 0.001, 1e-2);
  const auto batch = random_samples(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(posterior_update(prior, batch, net));
}
BENCHMARK(BM_PosteriorUpdate)->Arg(7)->Arg(70)->Arg(350);

void BM_CbfLowerBoundGradient(benchmark::State& state) {
  const auto net = default_net();
  const auto post = posterior_update(Posterior::isotropic(net.output_dim(), 0.001, 1e-2), random_samples(70, 3), net);
  const Vec2 z(0.9, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(cbf_lower_bound_gradient(post, 1.5, z, net));
}
BENCHMARK(BM_CbfLowerBoundGradient);

void BM_QpSolve(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  const int rows = static_cast<int>(state.range(0));
  QPProblem p;
  p.hessian = Eigen::Vector3d(1.0, 1.0, 20.0).asDiagonal();
  p.linear = Eigen::Vector3d::Zero();
  p.G.resize(rows, 3);
  p.c.resize(rows);
  for (int r = 0; r < rows; ++r) {
    p.G.row(r) = Eigen::RowVector3d(n01(rng), n01(rng), r == 0 ? -1.0 : 0.0);
    p.c(r) = n01(rng) + 1.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(solve_qp(p));
}
BENCHMARK(BM_QpSolve)->Arg(5)->Arg(8);

void BM_GpFit(benchmark::State& state) {
  SurfaceDataset data;
  data.samples = random_samples(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(gp_fit(data));
}
BENCHMARK(BM_GpFit)->Arg(70)->Arg(350)->Unit(benchmark::kMillisecond);

void BM_MetaLoss(benchmark::State& state) {
  MetaConfig cfg;
  const MetaParams params = initial_meta_params(cfg);
  std::vector<TaskSplit> tasks(4);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto s = random_samples(200, 10 + t);
    tasks[t].train.assign(s.begin(), s.begin() + 100);
    tasks[t].test.assign(s.begin() + 100, s.end());
  }
  for (auto _ : state) benchmark::DoNotOptimize(meta_loss(params, tasks, cfg.gamma));
}
BENCHMARK(BM_MetaLoss)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace cbfmeta

BENCHMARK_MAIN();
