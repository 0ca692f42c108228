#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "dkf/statespace.hpp"

namespace dkf {

// p(x | z) = N(x; h(z), Lambda). Affine models also carry (H, offset) so the
// plain Kalman filter can use them.
struct GenerativeObservationModel {
  std::function<Vector(const Vector&)> h;
  Matrix Lambda;
  // Analytic Jacobian dh/dz (m x d); empty when unavailable.
  std::function<Matrix(const Vector&)> jacobian;
  bool allow_finite_difference = true;
  std::optional<Matrix> H;
  std::optional<Vector> offset;

  static GenerativeObservationModel affine(const Matrix& H, const Vector& offset,
                                           const Matrix& Lambda);
  static GenerativeObservationModel linear(const Matrix& H, const Matrix& Lambda);

  bool is_affine() const { return H.has_value(); }
};

// p(z | x) = N(z; f(x), Q(x)).
struct DiscriminativeObservationModel {
  std::function<Vector(const Vector&)> f;
  std::function<Matrix(const Vector&)> Q;
};

struct UkfParameters {
  double alpha = 1.0;
  double beta = 2.0;
  // Defaults to 3 - d.
  std::optional<double> kappa;

  double kappa_for(Eigen::Index d) const {
    return kappa.value_or(3.0 - static_cast<double>(d));
  }
  // lambda = alpha^2 (d + kappa) - d
  double lambda_for(Eigen::Index d) const;
  void validate(Eigen::Index d) const;
};

enum class PosteriorFailurePolicy {
  kThrow,
  // Retry the step without the -S^{-1} prior-correction term.
  kDropPriorCorrection,
};

struct DkfOptions {
  bool regularize_q = true;
  PosteriorFailurePolicy on_invalid_posterior = PosteriorFailurePolicy::kThrow;
};

// Warning counters accumulated while filtering.
struct FilterDiagnostics {
  long q_regularizations = 0;
  long posterior_fallbacks = 0;

  FilterDiagnostics& operator+=(const FilterDiagnostics& other) {
    q_regularizations += other.q_regularizations;
    posterior_fallbacks += other.posterior_fallbacks;
    return *this;
  }
};

// Prior (0, S) used to start every filter.
GaussianBelief initial_belief(const LinearGaussianDynamics& dyn);

// Central differences with step 1e-5 * (1 + |z_i|) per coordinate.
Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& h, const Vector& z);

GaussianBelief kalman_step(const GaussianBelief& belief, const Vector& x,
                           const LinearGaussianDynamics& dyn,
                           const GenerativeObservationModel& obs);

// Linearizes h at the predicted mean A mu.
GaussianBelief ekf_step(const GaussianBelief& belief, const Vector& x,
                        const LinearGaussianDynamics& dyn,
                        const GenerativeObservationModel& obs);

GaussianBelief ukf_step(const GaussianBelief& belief, const Vector& x,
                        const LinearGaussianDynamics& dyn,
                        const GenerativeObservationModel& obs,
                        const UkfParameters& params = {});

// Discriminative Kalman filter update:
//   M     = A Sigma A^T + Gamma
//   Sigma' = (Q(x)^-1 + M^-1 - S^-1)^-1
//   mu'    = Sigma' (Q(x)^-1 f(x) + M^-1 A mu)
// Q(x) is passed through regularize_Q first unless disabled in `options`.
GaussianBelief dkf_step(const GaussianBelief& belief, const Vector& x,
                        const LinearGaussianDynamics& dyn,
                        const DiscriminativeObservationModel& obs,
                        const DkfOptions& options = {},
                        FilterDiagnostics* diagnostics = nullptr);

// Fixed point of the DKF covariance recursion for constant Q, iterated from S.
Matrix dkf_steady_state_covariance(const LinearGaussianDynamics& dyn, const Matrix& Q,
                                   int max_iterations = 10000);

// Returns Q' SPD with S - Q' PSD. Inputs that already qualify come back
// unchanged; otherwise the eigenvalues of S^{-1/2} Q S^{-1/2} are clipped into
// [1e-6, 1 - 1e-6].
Matrix regularize_Q(const Matrix& Qx, const Matrix& S, bool* changed = nullptr);

enum class FilterKind { kKalman, kEkf, kUkf, kDkf };

std::string_view to_string(FilterKind kind);

struct FilterModels {
  LinearGaussianDynamics dynamics;
  std::optional<GenerativeObservationModel> generative;
  std::optional<DiscriminativeObservationModel> discriminative;
  UkfParameters ukf;
  DkfOptions dkf;
};

struct FilterRun {
  std::vector<GaussianBelief> beliefs;
  FilterDiagnostics diagnostics;
};

// Filters each row of `observations` in order from the (0, S) prior. Step
// failures are rethrown as FilterStepError carrying first_t + row.
FilterRun run_filter(FilterKind kind, const Matrix& observations, const FilterModels& models,
                     Eigen::Index first_t = 0);

// Filters the test segment of `dataset`.
FilterRun run_filter(FilterKind kind, const TrajectoryDataset& dataset, const FilterModels& models);

}  // namespace dkf
