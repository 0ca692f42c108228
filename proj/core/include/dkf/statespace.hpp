#pragma once

#include <cstdint>

#include "dkf/linalg.hpp"
#include "dkf/random.hpp"

namespace dkf {

// Posterior N(mean, covariance) of the latent state.
struct GaussianBelief {
  Vector mean;
  Matrix covariance;

  Eigen::Index dim() const { return mean.size(); }

  // Throws kInvalidArgument unless the covariance is square, matches the mean,
  // is symmetric to 1e-12 relative and positive definite.
  void validate() const;
};

// z_t = A z_{t-1} + w_t, w_t ~ N(0, Gamma), stationary covariance S.
struct LinearGaussianDynamics {
  Matrix A;
  Matrix Gamma;
  Matrix S;

  Eigen::Index dim() const { return A.rows(); }

  // Solves for S and checks the result.
  static LinearGaussianDynamics from_transition(const Matrix& A, const Matrix& Gamma);

  void validate() const;
};

// Aligned latent/observation sequences. Row t of `states` is z_t and row t of
// `observations` is the observation paired with it after the lag is applied.
// Rows [0, split_index) are training data, [split_index, T) test data.
struct TrajectoryDataset {
  Matrix states;        // T x d
  Matrix observations;  // T x m
  Eigen::Index split_index = 0;
  int lag = 0;
  std::uint64_t seed = 0;

  Eigen::Index length() const { return states.rows(); }
  Eigen::Index state_dim() const { return states.cols(); }
  Eigen::Index observation_dim() const { return observations.cols(); }
  Eigen::Index test_length() const { return length() - split_index; }

  Matrix train_states() const { return states.topRows(split_index); }
  Matrix train_observations() const { return observations.topRows(split_index); }
  Matrix test_states() const { return states.bottomRows(test_length()); }
  Matrix test_observations() const { return observations.bottomRows(test_length()); }

  void validate() const;
};

// Spectral-radius margin below 1 required for stationarity.
inline constexpr double kStationarityMargin = 1e-9;

// Solves S = A S A^T + Gamma with the doubling recursion
// S <- S + A_k S A_k^T, A_k <- A_k^2 started from S = Gamma.
Matrix solve_stationary_covariance(const Matrix& A, const Matrix& Gamma);

// Least squares fit of z_next ~ A z_prev (no intercept), Gamma from the
// residual second moment with denominator n, then S from the Lyapunov solve.
// Rows of `prev` and `next` are paired.
LinearGaussianDynamics fit_dynamics(const Matrix& prev, const Matrix& next);

// Consecutive pairs (z_{t-1}, z_t) of a state sequence (rows).
LinearGaussianDynamics fit_dynamics(const Matrix& states);

// Adds eps * I with eps = 1e-9 * trace / d (1e-9 when the trace is zero).
Matrix floor_covariance(const Matrix& cov);

// sign with sign(0) = 0.
double sign0(double value);

// Noise-free-able observation maps of the two synthetic models.
double synthetic1_observation(double z, int k, int zeta, double theta);
Vector synthetic2_observation(double z, double theta1, double theta2);

// Z_t = 0.9 Z_{t-1} + N(0,1), X_tk = atan(Z_t / k) + pi*zeta + 0.2*theta,
// k = 1..m. Draw order per step: gamma (t > 0), then (zeta, theta) for each k.
TrajectoryDataset generate_synthetic1(Eigen::Index T, Eigen::Index m, RandomSource& rng);

// Same state chain, X_t = (|Z_t| + 0.1 theta_1, sign(Z_t) + 0.1 theta_2).
TrajectoryDataset generate_synthetic2(Eigen::Index T, RandomSource& rng);

// Two-dimensional rotating AR(1) latent state observed through m Poisson
// channels whose log-rates are random bump-shaped functions of the state.
// Stand-in for binned spike counts.
TrajectoryDataset generate_spike_surrogate(Eigen::Index T, Eigen::Index m, RandomSource& rng);

}  // namespace dkf
