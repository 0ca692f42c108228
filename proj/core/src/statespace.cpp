#include "dkf/statespace.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dkf/errors.hpp"

namespace dkf {

namespace {

constexpr double kSymmetryTolerance = 1e-12;
constexpr int kMaxDoublingIterations = 200;

void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorKind::kInvalidArgument, message);
}

Vector stationary_draw(const Matrix& S, RandomSource& rng) {
  Eigen::LLT<Matrix> llt(S);
  Vector g(S.rows());
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.gaussian();
  return llt.matrixL() * g;
}

// Shared chain Z_t = 0.9 Z_{t-1} + gamma_t for the two scalar models. The
// per-step observation callback draws its own noise right after the state.
template <typename ObserveFn>
TrajectoryDataset simulate_scalar_chain(Eigen::Index T, Eigen::Index m,
                                        RandomSource& rng, ObserveFn observe) {
  constexpr double kTransition = 0.9;
  const double stationary_variance = 1.0 / (1.0 - kTransition * kTransition);
  TrajectoryDataset data;
  data.states.resize(T, 1);
  data.observations.resize(T, m);
  double z = std::sqrt(stationary_variance) * rng.gaussian();
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) z = kTransition * z + rng.gaussian();
    data.states(t, 0) = z;
    observe(z, data.observations.row(t));
  }
  data.split_index = T / 2;
  data.lag = 0;
  data.seed = rng.seed();
  return data;
}

}  // namespace

void GaussianBelief::validate() const {
  require(covariance.rows() == mean.size() && covariance.cols() == mean.size(),
          "belief covariance does not match mean dimension");
  require(relative_asymmetry(covariance) <= kSymmetryTolerance,
          "belief covariance is not symmetric");
  require(is_positive_definite(covariance), "belief covariance is not positive definite");
}

LinearGaussianDynamics LinearGaussianDynamics::from_transition(const Matrix& A,
                                                               const Matrix& Gamma) {
  LinearGaussianDynamics dyn{A, Gamma, solve_stationary_covariance(A, Gamma)};
  return dyn;
}

void LinearGaussianDynamics::validate() const {
  const auto d = A.rows();
  require(A.cols() == d && Gamma.rows() == d && Gamma.cols() == d && S.rows() == d &&
              S.cols() == d,
          "dynamics matrices have inconsistent shapes");
  require(is_positive_definite(Gamma), "Gamma is not positive definite");
  require(is_positive_definite(S), "S is not positive definite");
  const double radius = spectral_radius(A);
  if (radius >= 1.0 - kStationarityMargin) {
    std::ostringstream msg;
    msg << "spectral radius of A is " << radius;
    throw Error(ErrorKind::kNonStationary, msg.str());
  }
  const double residual = (S - A * S * A.transpose() - Gamma).norm();
  require(residual <= 1e-8 * S.norm(), "S does not solve the stationary Lyapunov equation");
}

void TrajectoryDataset::validate() const {
  require(states.rows() == observations.rows(), "states and observations differ in length");
  require(states.rows() >= 2, "dataset needs at least two time steps");
  require(split_index > 0 && split_index < states.rows(), "split index out of range");
  require(states.cols() >= 1 && observations.cols() >= 1, "empty state or observation vectors");
}

Matrix solve_stationary_covariance(const Matrix& A, const Matrix& Gamma) {
  require(A.rows() == A.cols(), "A must be square");
  require(Gamma.rows() == A.rows() && Gamma.cols() == A.cols(), "Gamma must match A");
  const double radius = spectral_radius(A);
  if (!(radius < 1.0 - kStationarityMargin)) {
    std::ostringstream msg;
    msg << "spectral radius of A is " << radius << " (must be < 1)";
    throw Error(ErrorKind::kNonStationary, msg.str());
  }
  Matrix S = symmetrize(Gamma);
  Matrix power = A;
  for (int iter = 0; iter < kMaxDoublingIterations; ++iter) {
    const Matrix increment = power * S * power.transpose();
    S += increment;
    if (increment.norm() <= 1e-18 * S.norm()) break;
    power = power * power;
  }
  return symmetrize(S);
}

Matrix floor_covariance(const Matrix& cov) {
  const auto d = cov.rows();
  const double trace = cov.trace();
  const double eps = trace > 0.0 ? 1e-9 * trace / static_cast<double>(d) : 1e-9;
  return symmetrize(cov) + eps * Matrix::Identity(d, d);
}

LinearGaussianDynamics fit_dynamics(const Matrix& prev, const Matrix& next) {
  require(prev.rows() == next.rows() && prev.cols() == next.cols(),
          "predecessor and successor blocks differ in shape");
  const auto n = prev.rows();
  const auto d = prev.cols();
  if (n < d + 1) {
    std::ostringstream msg;
    msg << "need at least " << d + 1 << " state pairs, got " << n;
    throw Error(ErrorKind::kRankDeficient, msg.str());
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(prev);
  if (qr.rank() < d) {
    throw Error(ErrorKind::kRankDeficient, "predecessor states do not span the state space");
  }
  const Matrix At = qr.solve(next);  // d x d, solves prev * A^T = next
  Matrix A = At.transpose();
  const Matrix residuals = next - prev * At;
  const Matrix Gamma = floor_covariance(residuals.transpose() * residuals / static_cast<double>(n));
  return LinearGaussianDynamics{A, Gamma, solve_stationary_covariance(A, Gamma)};
}

LinearGaussianDynamics fit_dynamics(const Matrix& states) {
  const auto T = states.rows();
  require(T >= 2, "need at least two states");
  return fit_dynamics(states.topRows(T - 1), states.bottomRows(T - 1));
}

double sign0(double value) {
  if (value > 0.0) return 1.0;
  if (value < 0.0) return -1.0;
  return 0.0;
}

double synthetic1_observation(double z, int k, int zeta, double theta) {
  return std::atan(z / static_cast<double>(k)) + (std::numbers::pi * zeta + 0.2 * theta);
}

Vector synthetic2_observation(double z, double theta1, double theta2) {
  Vector x(2);
  x << std::abs(z) + 0.1 * theta1, sign0(z) + 0.1 * theta2;
  return x;
}

TrajectoryDataset generate_synthetic1(Eigen::Index T, Eigen::Index m, RandomSource& rng) {
  require(T >= 2, "T must be at least 2");
  require(m >= 1, "m must be at least 1");
  return simulate_scalar_chain(T, m, rng, [&rng, m](double z, auto row) {
    for (Eigen::Index k = 1; k <= m; ++k) {
      const int zeta = rng.ternary();
      const double theta = rng.gaussian();
      row(k - 1) = synthetic1_observation(z, static_cast<int>(k), zeta, theta);
    }
  });
}

TrajectoryDataset generate_synthetic2(Eigen::Index T, RandomSource& rng) {
  require(T >= 2, "T must be at least 2");
  return simulate_scalar_chain(T, 2, rng, [&rng](double z, auto row) {
    const double theta1 = rng.gaussian();
    const double theta2 = rng.gaussian();
    row = synthetic2_observation(z, theta1, theta2).transpose();
  });
}

TrajectoryDataset generate_spike_surrogate(Eigen::Index T, Eigen::Index m, RandomSource& rng) {
  require(T >= 2, "T must be at least 2");
  require(m >= 1, "m must be at least 1");
  constexpr double kDecay = 0.98;
  constexpr double kRotation = 0.05;
  Matrix A(2, 2);
  A << std::cos(kRotation), -std::sin(kRotation), std::sin(kRotation), std::cos(kRotation);
  A *= kDecay;
  const Matrix Gamma = (1.0 - kDecay * kDecay) * Matrix::Identity(2, 2);
  const Matrix S = solve_stationary_covariance(A, Gamma);

  // Channel k: log rate = base_k + gain_k * exp(-|z - c_k|^2 / (2 w_k^2)), a
  // bump-shaped tuning curve centred at c_k.
  Matrix centers(m, 2);
  Vector base(m), gain(m), width(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    const double radius = 2.0 * std::sqrt(rng.uniform());
    centers(k, 0) = radius * std::cos(angle);
    centers(k, 1) = radius * std::sin(angle);
    base(k) = -0.5 + rng.uniform();
    gain(k) = 1.0 + rng.uniform();
    width(k) = 0.8 + 0.8 * rng.uniform();
  }

  TrajectoryDataset data;
  data.states.resize(T, 2);
  data.observations.resize(T, m);
  const Eigen::LLT<Matrix> gamma_llt(Gamma);
  Vector z = stationary_draw(S, rng);
  Vector noise(2);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) {
      noise << rng.gaussian(), rng.gaussian();
      z = A * z + gamma_llt.matrixL() * noise;
    }
    data.states.row(t) = z.transpose();
    for (Eigen::Index k = 0; k < m; ++k) {
      const double r2 = (z.transpose() - centers.row(k)).squaredNorm();
      const double log_rate = base(k) + gain(k) * std::exp(-r2 / (2.0 * width(k) * width(k)));
      data.observations(t, k) = rng.poisson(std::exp(log_rate));
    }
  }
  data.split_index = T / 2;
  data.lag = 0;
  data.seed = rng.seed();
  return data;
}

}  // namespace dkf
