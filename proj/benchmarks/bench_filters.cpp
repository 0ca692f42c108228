#include <benchmark/benchmark.h>

#include <cmath>

#include "dkf/oracle.hpp"
#include "dkf/regression.hpp"

namespace {

using dkf::Matrix;
using dkf::Vector;

dkf::LinearGaussianDynamics dynamics(Eigen::Index d) {
  return dkf::LinearGaussianDynamics::from_transition(0.8 * Matrix::Identity(d, d),
                                                      Matrix::Identity(d, d));
}

void BM_KalmanStep(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  const Eigen::Index m = 5 * d;
  const auto dyn = dynamics(d);
  const auto obs = dkf::GenerativeObservationModel::linear(Matrix::Ones(m, d),
                                                           Matrix::Identity(m, m));
  auto belief = dkf::initial_belief(dyn);
  const Vector x = Vector::Constant(m, 0.3);
  for (auto _ : state) {
    belief = dkf::kalman_step(belief, x, dyn, obs);
    benchmark::DoNotOptimize(belief.mean.data());
  }
}
BENCHMARK(BM_KalmanStep)->Arg(1)->Arg(2)->Arg(5);

void BM_DkfStep(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  const auto dyn = dynamics(d);
  const Matrix Q = 0.5 * Matrix::Identity(d, d);
  const dkf::DiscriminativeObservationModel obs{
      [d](const Vector&) { return Vector(Vector::Constant(d, 0.4)); },
      [Q](const Vector&) { return Q; }};
  auto belief = dkf::initial_belief(dyn);
  const Vector x = Vector::Constant(3, 0.3);
  for (auto _ : state) {
    belief = dkf::dkf_step(belief, x, dyn, obs);
    benchmark::DoNotOptimize(belief.mean.data());
  }
}
BENCHMARK(BM_DkfStep)->Arg(1)->Arg(2)->Arg(5);

void BM_UkfStep(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  const auto dyn = dynamics(d);
  dkf::GenerativeObservationModel obs;
  obs.h = [](const Vector& z) { return Vector(z.array().atan().matrix()); };
  obs.Lambda = 0.1 * Matrix::Identity(d, d);
  auto belief = dkf::initial_belief(dyn);
  const Vector x = Vector::Constant(d, 0.3);
  for (auto _ : state) {
    belief = dkf::ukf_step(belief, x, dyn, obs);
    benchmark::DoNotOptimize(belief.mean.data());
  }
}
BENCHMARK(BM_UkfStep)->Arg(1)->Arg(2)->Arg(5);

void BM_GpPredict(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  dkf::RandomSource rng(1);
  Matrix X(n, 5);
  Matrix Z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) X(i, j) = rng.gaussian();
    Z(i, 0) = std::sin(X(i, 0));
  }
  dkf::GpHyperparameters h;
  const dkf::GpRegressor gp(dkf::InputScaler::fit(X), X, Z, {h});
  const Vector x = X.row(0).transpose();
  for (auto _ : state) {
    benchmark::DoNotOptimize(gp.predict_mean(x).data());
    benchmark::DoNotOptimize(gp.predict_q(x).data());
  }
}
BENCHMARK(BM_GpPredict)->Arg(200)->Arg(1000);

void BM_GridStep(benchmark::State& state) {
  const auto dyn = dynamics(1);
  const auto grid = dkf::GridSpec::centered(dyn.S(0, 0), 8.0, state.range(0));
  const dkf::GridTransition transition(grid, dyn);
  auto density = dkf::GridDensity::gaussian(grid, 0.0, dyn.S(0, 0));
  for (auto _ : state) {
    density = dkf::grid_step_discriminative(density, 0.5, 0.8, dyn, transition);
    benchmark::DoNotOptimize(density.values.data());
  }
}
BENCHMARK(BM_GridStep)->Arg(1000)->Arg(4000);

}  // namespace

BENCHMARK_MAIN();
