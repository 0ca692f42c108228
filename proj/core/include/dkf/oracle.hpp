#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dkf/filters.hpp"

namespace dkf {

// Brute-force filtering on a uniform 1-D grid with trapezoid quadrature.
// Used as ground truth for the closed-form steps when d = 1.

struct GridSpec {
  double lower = -1.0;
  double upper = 1.0;
  Eigen::Index points = 4000;

  // [-width * sqrt(S), width * sqrt(S)].
  static GridSpec centered(double stationary_variance, double width = 8.0,
                           Eigen::Index points = 4000);

  double spacing() const { return (upper - lower) / static_cast<double>(points - 1); }
  double node(Eigen::Index i) const { return lower + static_cast<double>(i) * spacing(); }
  Vector nodes() const;
  // Trapezoid weights (h, with h/2 at both ends).
  Vector weights() const;

  void validate() const;
};

struct GridDensity {
  GridSpec grid;
  Vector values;

  // Density proportional to exp(log_values), normalized.
  static GridDensity from_log_values(const GridSpec& grid, const Vector& log_values);
  static GridDensity gaussian(const GridSpec& grid, double mean, double variance);

  double integral() const;
};

struct GridMoments {
  double mean = 0.0;
  double variance = 0.0;
};

GridMoments grid_moments(const GridDensity& density);

// Trapezoid evaluation of the transition integral at every node:
// int N(z; a z', gamma) p(z') dz'.
Vector grid_predict(const GridDensity& prior, const LinearGaussianDynamics& dyn);

// Transition integral as a dense node-to-node matrix, built once per grid and
// dynamics so a filter run pays for the kernel exponentials only once.
class GridTransition {
 public:
  GridTransition(const GridSpec& grid, const LinearGaussianDynamics& dyn);

  // Same result as grid_predict(prior, dyn) up to rounding.
  Vector predict(const GridDensity& prior) const;

 private:
  GridSpec grid_;
  Matrix kernel_;
};

// p(z | x_1:t) ∝ p(x | z) * predicted(z). `log_likelihood(z)` may drop constants.
GridDensity grid_step_generative(const GridDensity& prior,
                                 const std::function<double(double)>& log_likelihood,
                                 const LinearGaussianDynamics& dyn);

// Gaussian likelihood N(x; h(z), Lambda) from an observation model.
GridDensity grid_step_generative(const GridDensity& prior, const Vector& x,
                                 const LinearGaussianDynamics& dyn,
                                 const GenerativeObservationModel& obs);

// p(z | x_1:t) ∝ N(z; f, q) / N(z; 0, S) * predicted(z), ratio taken in log space.
GridDensity grid_step_discriminative(const GridDensity& prior, double f_value, double q_value,
                                     const LinearGaussianDynamics& dyn);

GridDensity grid_step_discriminative(const GridDensity& prior, double f_value, double q_value,
                                     const LinearGaussianDynamics& dyn,
                                     const GridTransition& transition);

// Runs the discriminative grid recursion from the stationary prior N(0, S).
std::vector<GridMoments> grid_filter_discriminative(const GridSpec& grid,
                                                    const std::vector<double>& f_values,
                                                    const std::vector<double>& q_values,
                                                    const LinearGaussianDynamics& dyn);

// Runs the generative grid recursion from N(0, S) over observation rows.
std::vector<GridMoments> grid_filter_generative(const GridSpec& grid, const Matrix& observations,
                                                const LinearGaussianDynamics& dyn,
                                                const GenerativeObservationModel& obs);

// Randomized comparison of dkf_step against the discriminative grid recursion
// for d = 1. Each configuration draws a stable a, Gamma, an observation
// sequence from the chain and either a constant q or a q(x) that varies with
// the observation, always below S.
struct OracleCheckOptions {
  int configurations = 20;
  int steps = 50;
  std::uint64_t seed = 1;
  Eigen::Index points = 4000;
};

struct OracleCheckCase {
  double a = 0.0;
  double gamma = 0.0;
  double S = 0.0;
  bool varying_q = false;
  double max_mean_deviation = 0.0;
  double max_variance_deviation = 0.0;
};

struct OracleCheckReport {
  std::vector<OracleCheckCase> cases;
  double max_mean_deviation = 0.0;
  double max_variance_deviation = 0.0;
};

OracleCheckReport oracle_check(const OracleCheckOptions& options = {});

}  // namespace dkf
