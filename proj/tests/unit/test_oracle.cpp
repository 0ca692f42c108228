#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dkf/errors.hpp"
#include "dkf/oracle.hpp"

namespace {

using dkf::GridDensity;
using dkf::GridSpec;
using dkf::Matrix;
using dkf::Vector;

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

dkf::LinearGaussianDynamics ar1(double a = 0.9, double gamma = 1.0) {
  return dkf::LinearGaussianDynamics::from_transition(scalar(a), scalar(gamma));
}

TEST(Grid, CenteredSpec) {
  const auto grid = GridSpec::centered(4.0);
  EXPECT_DOUBLE_EQ(grid.lower, -16.0);
  EXPECT_DOUBLE_EQ(grid.upper, 16.0);
  EXPECT_EQ(grid.points, 4000);
  EXPECT_NO_THROW(grid.validate());
  GridSpec bad{1.0, 0.0, 100};
  EXPECT_THROW(bad.validate(), dkf::Error);
  GridSpec few{0.0, 1.0, 8};
  EXPECT_THROW(few.validate(), dkf::Error);
}

TEST(Grid, TrapezoidWeights) {
  const GridSpec grid{0.0, 1.0, 5};
  const Vector w = grid.weights();
  EXPECT_DOUBLE_EQ(w(0), 0.125);
  EXPECT_DOUBLE_EQ(w(2), 0.25);
  EXPECT_DOUBLE_EQ(w.sum(), 1.0);
}

TEST(GridMoments, StandardNormal) {
  const auto density = GridDensity::gaussian(GridSpec::centered(1.0), 0.0, 1.0);
  EXPECT_NEAR(density.integral(), 1.0, 1e-9);
  const auto mom = dkf::grid_moments(density);
  EXPECT_LE(std::abs(mom.mean), 1e-6);
  EXPECT_GE(mom.variance, 0.9999);
  EXPECT_LE(mom.variance, 1.0001);
}

TEST(GridMoments, SymmetricDensityHasZeroMean) {
  const GridSpec grid{-3.0, 3.0, 601};
  Vector logs = grid.nodes().array().abs().matrix() * -1.5;
  const auto density = GridDensity::from_log_values(grid, logs);
  EXPECT_NEAR(dkf::grid_moments(density).mean, 0.0, 1e-14);
}

TEST(GridMoments, NarrowGaussian) {
  // sd 0.01 with spacing 0.002 gives 40 nodes across +-4 sd.
  const GridSpec grid{-1.0, 1.0, 1001};
  const auto density = GridDensity::gaussian(grid, 0.1, 1e-4);
  EXPECT_NEAR(dkf::grid_moments(density).variance, 1e-4, 1e-6);
}

TEST(GridPredict, ZeroTransitionForgetsPrior) {
  const dkf::LinearGaussianDynamics dyn{scalar(0.0), scalar(2.0), scalar(2.0)};
  const GridSpec grid = GridSpec::centered(2.0);
  const auto prior = GridDensity::gaussian(grid, 3.0, 0.1);
  const Vector pred = dkf::grid_predict(prior, dyn);
  const auto expected = GridDensity::gaussian(grid, 0.0, 2.0);
  EXPECT_LE((pred - expected.values).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GridPredict, TransitionMatrixAgreesWithDirectSum) {
  const auto dyn = ar1();
  const GridSpec grid = GridSpec::centered(dyn.S(0, 0), 8.0, 500);
  const auto prior = GridDensity::gaussian(grid, 1.0, 0.7);
  const dkf::GridTransition transition(grid, dyn);
  EXPECT_LE((transition.predict(prior) - dkf::grid_predict(prior, dyn)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(GridGenerative, ConstantLikelihoodIsPurePrediction) {
  const auto dyn = ar1();
  const GridSpec grid = GridSpec::centered(dyn.S(0, 0));
  const auto prior = GridDensity::gaussian(grid, 1.0, 0.5);
  const auto post = dkf::grid_step_generative(prior, [](double) { return 0.0; }, dyn);
  const auto mom = dkf::grid_moments(post);
  EXPECT_NEAR(mom.mean, 0.9, 1e-6);
  EXPECT_NEAR(mom.variance, 1.405, 1e-6);
}

TEST(GridGenerative, LinearGaussianMatchesKalman) {
  const auto dyn = ar1();
  const auto obs = dkf::GenerativeObservationModel::linear(scalar(1.0), scalar(0.5));
  const GridSpec grid = GridSpec::centered(dyn.S(0, 0));
  dkf::RandomSource rng(3);
  Matrix x(30, 1);
  for (Eigen::Index t = 0; t < 30; ++t) x(t, 0) = 2.0 * rng.gaussian();
  const auto moments = dkf::grid_filter_generative(grid, x, dyn, obs);
  dkf::GaussianBelief belief = dkf::initial_belief(dyn);
  for (Eigen::Index t = 0; t < 30; ++t) {
    belief = dkf::kalman_step(belief, x.row(t).transpose(), dyn, obs);
    EXPECT_NEAR(moments[static_cast<std::size_t>(t)].mean, belief.mean(0), 1e-4);
    EXPECT_NEAR(moments[static_cast<std::size_t>(t)].variance, belief.covariance(0, 0), 1e-4);
  }
}

TEST(GridDiscriminative, StationaryPriorGivesModelOutput) {
  const auto dyn = ar1();
  const GridSpec grid = GridSpec::centered(dyn.S(0, 0));
  const auto prior = GridDensity::gaussian(grid, 0.0, dyn.S(0, 0));
  const auto post = dkf::grid_step_discriminative(prior, 1.3, 0.6, dyn);
  const auto mom = dkf::grid_moments(post);
  EXPECT_NEAR(mom.mean, 1.3, 1e-6);
  EXPECT_NEAR(mom.variance, 0.6, 1e-6);
}

TEST(GridDiscriminative, MatchesDkfStep) {
  const auto dyn = ar1();
  const GridSpec grid = GridSpec::centered(dyn.S(0, 0));
  const auto prior = GridDensity::gaussian(grid, 1.0, 0.5);
  const auto post = dkf::grid_step_discriminative(prior, 2.0, 0.8, dyn);
  const auto mom = dkf::grid_moments(post);
  EXPECT_NEAR(mom.mean, 1.7725866709516733, 1e-4);
  EXPECT_NEAR(mom.variance, 0.5644156991925441, 1e-4);
}

TEST(GridDiscriminative, UninformativeLimitReturnsPrediction) {
  const auto dyn = ar1();
  const double S = dyn.S(0, 0);
  const GridSpec grid = GridSpec::centered(S);
  const auto prior = GridDensity::gaussian(grid, 1.0, 0.5);
  const auto post = dkf::grid_step_discriminative(prior, 0.0, 0.999 * S, dyn);
  const auto mom = dkf::grid_moments(post);
  // Predicted density is N(0.9, 1.405); the residual pull is O(1e-3).
  EXPECT_NEAR(mom.mean, 0.9, 2e-3);
  EXPECT_NEAR(mom.variance, 1.405, 2e-3);
}

TEST(GridFilter, RefinementConverges) {
  const auto dyn = ar1();
  const std::vector<double> f = {1.0, -0.5, 2.0, 0.3};
  const std::vector<double> q = {0.8, 1.2, 0.5, 2.0};
  const auto coarse = dkf::grid_filter_discriminative(GridSpec::centered(dyn.S(0, 0), 8.0, 1000), f, q, dyn);
  const auto fine = dkf::grid_filter_discriminative(GridSpec::centered(dyn.S(0, 0), 8.0, 2000), f, q, dyn);
  for (std::size_t t = 0; t < f.size(); ++t) {
    EXPECT_LE(std::abs(coarse[t].mean - fine[t].mean), 4e-4);
    EXPECT_LE(std::abs(coarse[t].variance - fine[t].variance), 4e-4);
  }
}

TEST(GridDensity, DegenerateDensityRaises) {
  const GridSpec grid{-1.0, 1.0, 100};
  const Vector logs = Vector::Constant(100, -std::numeric_limits<double>::infinity());
  try {
    GridDensity::from_log_values(grid, logs);
    FAIL();
  } catch (const dkf::Error& e) {
    EXPECT_EQ(e.kind(), dkf::ErrorKind::kDegenerateDensity);
  }
}

TEST(OracleCheck, SmallRunAgrees) {
  dkf::OracleCheckOptions options;
  options.configurations = 4;
  options.steps = 20;
  const auto report = dkf::oracle_check(options);
  ASSERT_EQ(report.cases.size(), 4u);
  EXPECT_FALSE(report.cases[0].varying_q);
  EXPECT_TRUE(report.cases[1].varying_q);
  EXPECT_LE(report.max_mean_deviation, 1e-4);
  EXPECT_LE(report.max_variance_deviation, 1e-4);
}

}  // namespace
