#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dkf/bench.hpp"
#include "dkf/oracle.hpp"

namespace {

using dkf::GaussianBelief;
using dkf::Matrix;
using dkf::RandomSource;
using dkf::Vector;

Matrix random_matrix(RandomSource& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
  return m;
}

Matrix random_spd(RandomSource& rng, Eigen::Index d, double ridge = 0.2) {
  const Matrix L = random_matrix(rng, d, d);
  return dkf::symmetrize(L * L.transpose() / static_cast<double>(d) +
                         ridge * Matrix::Identity(d, d));
}

// Random transition scaled to spectral radius `radius`.
Matrix random_stable(RandomSource& rng, Eigen::Index d, double radius) {
  const Matrix A = random_matrix(rng, d, d);
  return A * (radius / dkf::spectral_radius(A));
}

dkf::LinearGaussianDynamics random_dynamics(RandomSource& rng, Eigen::Index d) {
  return dkf::LinearGaussianDynamics::from_transition(
      random_stable(rng, d, 0.3 + 0.65 * rng.uniform()), random_spd(rng, d));
}

bool symmetric_pd(const Matrix& m) {
  return dkf::relative_asymmetry(m) <= 1e-12 && dkf::is_positive_definite(m);
}

// statespace

TEST(StatespaceProperties, GeneratorsAreDeterministic) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    RandomSource a(seed), b(seed);
    const auto d1 = dkf::generate_synthetic1(1000, 5, a);
    const auto d2 = dkf::generate_synthetic1(1000, 5, b);
    EXPECT_TRUE(d1.states == d2.states && d1.observations == d2.observations);
    RandomSource c(seed), e(seed);
    const auto s1 = dkf::generate_synthetic2(1000, c);
    const auto s2 = dkf::generate_synthetic2(1000, e);
    EXPECT_TRUE(s1.states == s2.states && s1.observations == s2.observations);
  }
}

TEST(StatespaceProperties, StationaryCovarianceMatchesIterationAndDominatesGamma) {
  RandomSource rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(5));
    const Matrix A = random_stable(rng, d, 0.1 + 0.8 * rng.uniform());
    const Matrix G = random_spd(rng, d);
    const Matrix S = dkf::solve_stationary_covariance(A, G);
    Matrix iter = G;
    for (int i = 0; i < 10000; ++i) iter = A * iter * A.transpose() + G;
    EXPECT_LE((S - iter).norm(), 1e-8) << trial;
    EXPECT_GE(dkf::min_eigenvalue(S - G), -1e-10 * S.norm()) << trial;
  }
}

TEST(StatespaceProperties, FitDynamicsIsConsistent) {
  RandomSource rng(102);
  const Matrix A = random_stable(rng, 2, 0.8);
  const Matrix G = random_spd(rng, 2);
  const Eigen::LLT<Matrix> llt(G);
  const Eigen::Index T = 50000;
  Matrix states(T, 2);
  Vector z = Vector::Zero(2);
  for (Eigen::Index t = 0; t < T; ++t) {
    z = A * z + llt.matrixL() * random_matrix(rng, 2, 1);
    states.row(t) = z.transpose();
  }
  EXPECT_LE((dkf::fit_dynamics(states).A - A).cwiseAbs().maxCoeff(), 0.02);
}

// filters

TEST(FilterProperties, DkfMatchesGridOracle) {
  dkf::OracleCheckOptions options;
  options.configurations = 6;
  options.steps = 30;
  options.seed = 7;
  const auto report = dkf::oracle_check(options);
  EXPECT_LE(report.max_mean_deviation, 1e-4);
  EXPECT_LE(report.max_variance_deviation, 1e-4);
}

TEST(FilterProperties, ConjugateDkfReproducesKalman) {
  RandomSource rng(103);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(3));
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.index(5));
    const auto dyn = random_dynamics(rng, d);
    const Matrix H = random_matrix(rng, m, d);
    const Matrix Lambda = random_spd(rng, m, 0.5);
    const auto gen = dkf::GenerativeObservationModel::linear(H, Lambda);
    const Matrix gain = dyn.S * H.transpose() * (H * dyn.S * H.transpose() + Lambda).inverse();
    const Matrix Q = dkf::symmetrize(dyn.S - gain * H * dyn.S);
    const dkf::DiscriminativeObservationModel disc{[gain](const Vector& x) { return Vector(gain * x); },
                                                   [Q](const Vector&) { return Q; }};
    auto kf = dkf::initial_belief(dyn);
    auto dk = kf;
    for (int t = 0; t < 200; ++t) {
      const Vector x = 2.0 * random_matrix(rng, m, 1);
      kf = dkf::kalman_step(kf, x, dyn, gen);
      dk = dkf::dkf_step(dk, x, dyn, disc);
      ASSERT_LE((kf.mean - dk.mean).cwiseAbs().maxCoeff(), 1e-8) << trial << ' ' << t;
    }
  }
}

TEST(FilterProperties, ConstantQCovarianceIgnoresObservations) {
  RandomSource rng(104);
  const auto dyn = random_dynamics(rng, 3);
  const Matrix Q = 0.3 * dyn.S;
  const dkf::DiscriminativeObservationModel obs{[](const Vector& x) { return Vector(x.head(3)); },
                                                [Q](const Vector&) { return Q; }};
  auto a = dkf::initial_belief(dyn);
  auto b = a;
  for (int t = 0; t < 100; ++t) {
    a = dkf::dkf_step(a, random_matrix(rng, 4, 1), dyn, obs);
    b = dkf::dkf_step(b, 10.0 * random_matrix(rng, 4, 1), dyn, obs);
    ASSERT_TRUE(a.covariance == b.covariance) << t;
  }
}

TEST(FilterProperties, CovariancesStaySymmetricPositiveDefinite) {
  RandomSource rng(105);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(4));
    const auto dyn = random_dynamics(rng, d);
    const Matrix H = random_matrix(rng, d + 1, d);
    dkf::GenerativeObservationModel nonlinear;
    nonlinear.h = [H](const Vector& z) { return Vector((H * z).array().tanh().matrix()); };
    nonlinear.Lambda = 0.1 * Matrix::Identity(d + 1, d + 1);
    const auto linear = dkf::GenerativeObservationModel::linear(H, nonlinear.Lambda);
    // x-varying Q, sometimes outside the valid set so regularization kicks in.
    const Matrix S = dyn.S;
    const dkf::DiscriminativeObservationModel disc{
        [d](const Vector& x) { return Vector(x.head(d)); },
        [S, d](const Vector& x) { return Matrix((0.2 + 1.5 * std::tanh(x.squaredNorm())) * S); }};
    GaussianBelief kf = dkf::initial_belief(dyn), ekf = kf, ukf = kf, dk = kf;
    for (int t = 0; t < 100; ++t) {
      const Vector x = random_matrix(rng, d + 1, 1);
      kf = dkf::kalman_step(kf, x, dyn, linear);
      ekf = dkf::ekf_step(ekf, x, dyn, nonlinear);
      ukf = dkf::ukf_step(ukf, x, dyn, nonlinear);
      dk = dkf::dkf_step(dk, x, dyn, disc);
      ASSERT_TRUE(symmetric_pd(kf.covariance));
      ASSERT_TRUE(symmetric_pd(ekf.covariance));
      ASSERT_TRUE(symmetric_pd(ukf.covariance));
      ASSERT_TRUE(symmetric_pd(dk.covariance));
    }
  }
}

TEST(FilterProperties, SigmaPointAndLinearizedFiltersAreExactOnAffineModels) {
  RandomSource rng(106);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(3));
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.index(4));
    const auto dyn = random_dynamics(rng, d);
    const Matrix H = random_matrix(rng, m, d);
    const Vector c = random_matrix(rng, m, 1);
    const auto affine = dkf::GenerativeObservationModel::affine(H, c, random_spd(rng, m, 0.3));
    dkf::GenerativeObservationModel opaque = affine;
    opaque.H.reset();
    opaque.offset.reset();
    opaque.jacobian = nullptr;
    opaque.h = [H, c](const Vector& z) { return Vector(H * z + c); };
    dkf::UkfParameters params;
    params.alpha = 0.2 + 0.8 * rng.uniform();
    params.beta = 4.0 * rng.uniform();
    params.kappa = 3.0 * rng.uniform();
    GaussianBelief kf = dkf::initial_belief(dyn), ekf = kf, ukf = kf;
    for (int t = 0; t < 50; ++t) {
      const Vector x = random_matrix(rng, m, 1);
      kf = dkf::kalman_step(kf, x, dyn, affine);
      ekf = dkf::ekf_step(ekf, x, dyn, opaque);
      ukf = dkf::ukf_step(ukf, x, dyn, opaque, params);
      ASSERT_LE((kf.mean - ekf.mean).cwiseAbs().maxCoeff(), 1e-8);
      ASSERT_LE((kf.mean - ukf.mean).cwiseAbs().maxCoeff(), 1e-8);
      ASSERT_LE((kf.covariance - ukf.covariance).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(FilterProperties, RegularizedQIsValid) {
  RandomSource rng(107);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(4));
    const Matrix S = random_spd(rng, d);
    const Matrix raw = dkf::symmetrize(3.0 * random_matrix(rng, d, d));
    const Matrix Q = dkf::regularize_Q(raw, S);
    EXPECT_TRUE(dkf::is_positive_definite(Q));
    EXPECT_GE(dkf::min_eigenvalue(S - Q), 0.0);
  }
}

// regression

TEST(RegressionProperties, GpMatchesDenseEvaluation) {
  RandomSource rng(108);
  for (Eigen::Index n : {5, 50, 200}) {
    const Matrix X = random_matrix(rng, n, 3);
    const Matrix Z = random_matrix(rng, n, 2);
    dkf::GpHyperparameters h0, h1;
    h0.kernel = {1.3, 0.8};
    h0.noise_variance = 0.05;
    h1.kernel = {0.7, 2.0};
    h1.noise_variance = 0.2;
    const auto scaler = dkf::InputScaler::fit(X);
    const dkf::GpRegressor gp(scaler, X, Z, {h0, h1});
    const Matrix Xs = scaler.apply_rows(X);
    for (int probe = 0; probe < 10; ++probe) {
      const Vector x = random_matrix(rng, 3, 1);
      const Vector xs = scaler.apply(x);
      const Vector mean = gp.predict_mean(x);
      const Vector q = gp.predict_q(x);
      for (int o = 0; o < 2; ++o) {
        const auto& h = o == 0 ? h0 : h1;
        const Matrix Kinv =
            (h.kernel.gram(Xs, Xs) + h.noise_variance * Matrix::Identity(n, n)).inverse();
        const Vector k = h.kernel.gram(xs.transpose(), Xs).transpose();
        EXPECT_NEAR(mean(o), k.dot(Kinv * Z.col(o)), 1e-10);
        EXPECT_NEAR(q(o), h.kernel.signal_variance - k.dot(Kinv * k) + h.noise_variance, 1e-10);
      }
    }
  }
}

TEST(RegressionProperties, PosteriorVarianceNeverGrowsWithData) {
  RandomSource rng(109);
  dkf::GpHyperparameters h;
  h.kernel = {0.9, 1.5};
  h.noise_variance = 0.1;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = random_matrix(rng, 21, 2);
    const Matrix Z = random_matrix(rng, 21, 1);
    const auto id = dkf::InputScaler::identity(2);
    const dkf::GpRegressor small(id, X.topRows(20), Z.topRows(20), {h});
    const dkf::GpRegressor large(id, X, Z, {h});
    for (int probe = 0; probe < 20; ++probe) {
      const Vector x = 1.5 * random_matrix(rng, 2, 1);
      EXPECT_LE(large.predict_q(x)(0), small.predict_q(x)(0) + 1e-12);
      EXPECT_GE(large.predict_q(x)(0), h.noise_variance - 1e-12);
    }
  }
}

TEST(RegressionProperties, FittedGpVarianceBoundedBelowByNoise) {
  RandomSource rng(110);
  const Matrix X = random_matrix(rng, 150, 2);
  Matrix Z(150, 2);
  Z.col(0) = X.col(0).array().sin().matrix() + 0.1 * random_matrix(rng, 150, 1);
  Z.col(1) = X.col(1) + 0.3 * random_matrix(rng, 150, 1);
  const auto gp = dkf::gp_fit(X, Z);
  for (int probe = 0; probe < 100; ++probe) {
    const Vector q = gp.predict_q(3.0 * random_matrix(rng, 2, 1));
    for (int o = 0; o < 2; ++o) {
      EXPECT_GE(q(o), gp.hyperparameters()[static_cast<std::size_t>(o)].noise_variance);
    }
  }
}

TEST(RegressionProperties, MlpIsDeterministicUnderSeed) {
  RandomSource data(111);
  const Matrix X = random_matrix(data, 200, 3);
  const Matrix Z = X.rowwise().sum().array().sin().matrix();
  RandomSource a(5), b(5);
  const auto na = dkf::mlp_fit(X, Z, a);
  const auto nb = dkf::mlp_fit(X, Z, b);
  EXPECT_TRUE(na.weights().W1 == nb.weights().W1);
  EXPECT_TRUE(na.weights().W2 == nb.weights().W2);
  EXPECT_TRUE(na.weights().b1 == nb.weights().b1);
  EXPECT_TRUE(na.weights().b2 == nb.weights().b2);
}

TEST(RegressionProperties, GpOutputsPermuteWithTargets) {
  RandomSource rng(112);
  const Matrix X = random_matrix(rng, 120, 2);
  Matrix Z(120, 3);
  Z.col(0) = X.col(0);
  Z.col(1) = X.col(1).array().cos().matrix();
  Z.col(2) = (X.col(0).array() * X.col(1).array()).matrix();
  Matrix P(120, 3);
  P.col(0) = Z.col(2);
  P.col(1) = Z.col(0);
  P.col(2) = Z.col(1);
  dkf::GpFitOptions options;
  options.seed = 3;
  const auto gz = dkf::gp_fit(X, Z, options);
  const auto gp = dkf::gp_fit(X, P, options);
  for (int probe = 0; probe < 10; ++probe) {
    const Vector x = random_matrix(rng, 2, 1);
    const Vector mz = gz.predict_mean(x);
    const Vector mp = gp.predict_mean(x);
    EXPECT_NEAR(mp(0), mz(2), 1e-10);
    EXPECT_NEAR(mp(1), mz(0), 1e-10);
    EXPECT_NEAR(mp(2), mz(1), 1e-10);
  }
}

// oracle

TEST(OracleProperties, GridDensitiesAreNormalized) {
  RandomSource rng(113);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = 1.8 * rng.uniform() - 0.9;
    const auto dyn = dkf::LinearGaussianDynamics::from_transition(Matrix::Constant(1, 1, a),
                                                                  Matrix::Constant(1, 1, 0.5 + rng.uniform()));
    const double S = dyn.S(0, 0);
    const auto grid = dkf::GridSpec::centered(S);
    const dkf::GridTransition transition(grid, dyn);
    auto density = dkf::GridDensity::gaussian(grid, 0.0, S);
    EXPECT_NEAR(density.integral(), 1.0, 1e-9);
    for (int t = 0; t < 10; ++t) {
      const double f = std::sqrt(S) * rng.gaussian();
      const double q = S * (0.05 + 0.9 * rng.uniform());
      density = dkf::grid_step_discriminative(density, f, q, dyn, transition);
      ASSERT_NEAR(density.integral(), 1.0, 1e-9);
    }
    const auto obs = dkf::GenerativeObservationModel::linear(Matrix::Ones(1, 1), Matrix::Ones(1, 1));
    const auto post = dkf::grid_step_generative(density, Vector::Constant(1, rng.gaussian()), dyn, obs);
    EXPECT_NEAR(post.integral(), 1.0, 1e-9);
  }
}

TEST(OracleProperties, GridRefinementConverges) {
  RandomSource rng(114);
  const auto dyn = dkf::LinearGaussianDynamics::from_transition(Matrix::Constant(1, 1, 0.7),
                                                                Matrix::Ones(1, 1));
  const double S = dyn.S(0, 0);
  std::vector<double> f, q;
  for (int t = 0; t < 20; ++t) {
    f.push_back(std::sqrt(S) * rng.gaussian());
    q.push_back(S * (0.1 + 0.8 * rng.uniform()));
  }
  const auto coarse = dkf::grid_filter_discriminative(dkf::GridSpec::centered(S, 8.0, 2000), f, q, dyn);
  const auto fine = dkf::grid_filter_discriminative(dkf::GridSpec::centered(S, 8.0, 4000), f, q, dyn);
  for (std::size_t t = 0; t < f.size(); ++t) {
    EXPECT_LE(std::abs(coarse[t].mean - fine[t].mean), 4e-4);
    EXPECT_LE(std::abs(coarse[t].variance - fine[t].variance), 4e-4);
  }
}

// bench

dkf::BenchmarkConfig small_config() {
  dkf::BenchmarkConfig config;
  config.dataset = dkf::DatasetKind::kSyn2;
  config.T = 400;
  config.trials = 2;
  config.seed = 17;
  config.filters = {dkf::BenchFilter::kKalman, dkf::BenchFilter::kUkf, dkf::BenchFilter::kDkfGp,
                    dkf::BenchFilter::kDkfNn};
  return config;
}

TEST(BenchProperties, NormalizedMseOfMeanPredictorIsOne) {
  RandomSource rng(115);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(4));
    const Matrix truth = random_matrix(rng, 50, d);
    const Matrix mean = truth.colwise().mean().replicate(50, 1);
    EXPECT_NEAR(dkf::normalized_mse(mean, truth), 1.0, 1e-12);
  }
}

TEST(BenchProperties, NormalizedMseIsScaleInvariant) {
  RandomSource rng(116);
  const Matrix truth = random_matrix(rng, 80, 2);
  const Matrix pred = truth + 0.3 * random_matrix(rng, 80, 2);
  const double base = dkf::normalized_mse(pred, truth);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    EXPECT_NEAR(dkf::normalized_mse(c * pred, c * truth), base, 1e-12 * base);
  }
}

TEST(BenchProperties, IdenticalConfigGivesIdenticalReport) {
  auto config = small_config();
  const auto a = dkf::run_benchmark(config);
  const auto b = dkf::run_benchmark(config);
  config.jobs = 2;
  const auto c = dkf::run_benchmark(config);
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].ok, b.cells[i].ok);
    EXPECT_EQ(a.cells[i].nmse, b.cells[i].nmse);
    EXPECT_EQ(a.cells[i].nmse, c.cells[i].nmse);
    EXPECT_TRUE(a.cells[i].predictions == b.cells[i].predictions);
  }
  EXPECT_EQ(dkf::emit_report(a, dkf::ReportFormat::kCsv), dkf::emit_report(b, dkf::ReportFormat::kCsv));
}

TEST(BenchProperties, CellsDoNotDependOnOtherFilters) {
  const auto config = small_config();
  const auto full = dkf::run_benchmark(config);
  for (std::size_t f = 0; f < config.filters.size(); ++f) {
    auto single = config;
    single.filters = {config.filters[f]};
    const auto alone = dkf::run_benchmark(single);
    for (int t = 0; t < config.trials; ++t) {
      EXPECT_EQ(alone.cell(0, t).nmse, full.cell(f, t).nmse) << full.filters[f] << ' ' << t;
    }
  }
}

TEST(BenchProperties, FittingNeverReadsTestRows) {
  for (auto kind : {dkf::DatasetKind::kSyn1, dkf::DatasetKind::kSyn2}) {
    dkf::BenchmarkConfig config;
    config.dataset = kind;
    config.T = 500;
    config.m = 3;
    const auto clean = dkf::trial_dataset(config, 0);
    auto poisoned = clean;
    const auto test = clean.test_length();
    poisoned.states.bottomRows(test).setConstant(std::nan(""));
    poisoned.observations.bottomRows(test).setConstant(1e300);
    const auto settings = dkf::trial_fit_settings(config, 0);
    for (auto filter : dkf::all_bench_filters()) {
      const auto a = dkf::fit_filter_model(filter, clean, settings);
      const auto b = dkf::fit_filter_model(filter, poisoned, settings);
      EXPECT_EQ(dkf::serialize_model(a), dkf::serialize_model(b)) << dkf::to_string(filter);
    }
  }
}

}  // namespace
