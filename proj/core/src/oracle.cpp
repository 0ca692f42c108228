#include "dkf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dkf/errors.hpp"

namespace dkf {

namespace {

void require_scalar(const LinearGaussianDynamics& dyn) {
  if (dyn.dim() != 1) throw Error(ErrorKind::kInvalidArgument, "grid oracle supports d = 1 only");
}

// Nodes whose prior value is below this fraction of the peak are skipped in the
// transition integral; their total contribution is far below double precision.
constexpr double kNegligibleMass = 1e-30;

}  // namespace

GridSpec GridSpec::centered(double stationary_variance, double width, Eigen::Index points) {
  const double half = width * std::sqrt(stationary_variance);
  return {-half, half, points};
}

Vector GridSpec::nodes() const {
  Vector z(points);
  for (Eigen::Index i = 0; i < points; ++i) z(i) = node(i);
  return z;
}

Vector GridSpec::weights() const {
  Vector w = Vector::Constant(points, spacing());
  w(0) *= 0.5;
  w(points - 1) *= 0.5;
  return w;
}

void GridSpec::validate() const {
  if (!(lower < upper) || points < 16) {
    throw Error(ErrorKind::kInvalidArgument, "grid needs lower < upper and at least 16 points");
  }
}

GridDensity GridDensity::from_log_values(const GridSpec& grid, const Vector& log_values) {
  grid.validate();
  const double peak = log_values.maxCoeff();
  if (!std::isfinite(peak)) {
    throw Error(ErrorKind::kDegenerateDensity, "density has no finite mass on the grid");
  }
  Vector values = (log_values.array() - peak).exp().matrix();
  const double mass = grid.weights().dot(values);
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw Error(ErrorKind::kDegenerateDensity, "density mass underflowed");
  }
  return {grid, values / mass};
}

GridDensity GridDensity::gaussian(const GridSpec& grid, double mean, double variance) {
  const Vector z = grid.nodes();
  const Vector log_values = (-(z.array() - mean).square() / (2.0 * variance)).matrix();
  return from_log_values(grid, log_values);
}

double GridDensity::integral() const { return grid.weights().dot(values); }

GridMoments grid_moments(const GridDensity& density) {
  const Vector z = density.grid.nodes();
  const Vector w = density.grid.weights().cwiseProduct(density.values);
  const double mass = w.sum();
  const double mean = w.dot(z) / mass;
  const double variance = w.dot((z.array() - mean).square().matrix()) / mass;
  return {mean, variance};
}

Vector grid_predict(const GridDensity& prior, const LinearGaussianDynamics& dyn) {
  require_scalar(dyn);
  const double a = dyn.A(0, 0);
  const double gamma = dyn.Gamma(0, 0);
  const GridSpec& grid = prior.grid;
  const Vector z = grid.nodes();
  const Vector w = grid.weights();

  const double threshold = kNegligibleMass * prior.values.maxCoeff();
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < grid.points; ++j) {
    if (prior.values(j) > threshold) active.push_back(j);
  }
  Eigen::ArrayXd source(static_cast<Eigen::Index>(active.size()));
  Eigen::ArrayXd mass(static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) {
    source(static_cast<Eigen::Index>(k)) = a * z(active[k]);
    mass(static_cast<Eigen::Index>(k)) = w(active[k]) * prior.values(active[k]);
  }
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * gamma);
  const double scale = -0.5 / gamma;
  Vector predicted(grid.points);
  for (Eigen::Index i = 0; i < grid.points; ++i) {
    predicted(i) = norm * (((z(i) - source).square() * scale).exp() * mass).sum();
  }
  return predicted;
}

namespace {

GridDensity posterior_generative(const GridSpec& grid, const Vector& predicted,
                                 const std::function<double(double)>& log_likelihood) {
  Vector log_values(grid.points);
  for (Eigen::Index i = 0; i < grid.points; ++i) {
    log_values(i) = std::log(predicted(i)) + log_likelihood(grid.node(i));
  }
  return GridDensity::from_log_values(grid, log_values);
}

GridDensity posterior_discriminative(const GridSpec& grid, const Vector& predicted, double f_value,
                                     double q_value, double S) {
  if (!(q_value > 0.0)) throw Error(ErrorKind::kInvalidArgument, "q must be positive");
  Vector log_values(grid.points);
  for (Eigen::Index i = 0; i < grid.points; ++i) {
    const double z = grid.node(i);
    // log N(z; f, q) - log N(z; 0, S)
    const double log_ratio = -0.5 * (z - f_value) * (z - f_value) / q_value -
                             0.5 * std::log(q_value) + 0.5 * z * z / S + 0.5 * std::log(S);
    log_values(i) = std::log(predicted(i)) + log_ratio;
  }
  return GridDensity::from_log_values(grid, log_values);
}

std::function<double(double)> gaussian_log_likelihood(const Vector& x,
                                                      const GenerativeObservationModel& obs,
                                                      const Eigen::LLT<Matrix>& llt) {
  return [&x, &obs, &llt](double z) {
    const Vector residual = x - obs.h(Vector::Constant(1, z));
    const Vector white = llt.matrixL().solve(residual);
    return -0.5 * white.squaredNorm();
  };
}

Eigen::LLT<Matrix> factor_lambda(const Matrix& Lambda) {
  Eigen::LLT<Matrix> llt(Lambda);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::kInvalidArgument, "Lambda is not positive definite");
  }
  return llt;
}

}  // namespace

GridTransition::GridTransition(const GridSpec& grid, const LinearGaussianDynamics& dyn)
    : grid_(grid) {
  require_scalar(dyn);
  grid.validate();
  const double a = dyn.A(0, 0);
  const double gamma = dyn.Gamma(0, 0);
  const Vector z = grid.nodes();
  const Vector w = grid.weights();
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * gamma);
  const double scale = -0.5 / gamma;
  kernel_.resize(grid.points, grid.points);
  for (Eigen::Index j = 0; j < grid.points; ++j) {
    kernel_.col(j) = (norm * w(j)) * ((z.array() - a * z(j)).square() * scale).exp().matrix();
  }
}

Vector GridTransition::predict(const GridDensity& prior) const {
  if (prior.grid.points != grid_.points) {
    throw Error(ErrorKind::kInvalidArgument, "density and transition use different grids");
  }
  return kernel_ * prior.values;
}

GridDensity grid_step_generative(const GridDensity& prior,
                                 const std::function<double(double)>& log_likelihood,
                                 const LinearGaussianDynamics& dyn) {
  return posterior_generative(prior.grid, grid_predict(prior, dyn), log_likelihood);
}

GridDensity grid_step_generative(const GridDensity& prior, const Vector& x,
                                 const LinearGaussianDynamics& dyn,
                                 const GenerativeObservationModel& obs) {
  const auto llt = factor_lambda(obs.Lambda);
  return grid_step_generative(prior, gaussian_log_likelihood(x, obs, llt), dyn);
}

GridDensity grid_step_discriminative(const GridDensity& prior, double f_value, double q_value,
                                     const LinearGaussianDynamics& dyn) {
  require_scalar(dyn);
  return posterior_discriminative(prior.grid, grid_predict(prior, dyn), f_value, q_value,
                                  dyn.S(0, 0));
}

GridDensity grid_step_discriminative(const GridDensity& prior, double f_value, double q_value,
                                     const LinearGaussianDynamics& dyn,
                                     const GridTransition& transition) {
  require_scalar(dyn);
  return posterior_discriminative(prior.grid, transition.predict(prior), f_value, q_value,
                                  dyn.S(0, 0));
}

std::vector<GridMoments> grid_filter_discriminative(const GridSpec& grid,
                                                    const std::vector<double>& f_values,
                                                    const std::vector<double>& q_values,
                                                    const LinearGaussianDynamics& dyn) {
  require_scalar(dyn);
  if (f_values.size() != q_values.size()) {
    throw Error(ErrorKind::kInvalidArgument, "f and q sequences differ in length");
  }
  const GridTransition transition(grid, dyn);
  GridDensity density = GridDensity::gaussian(grid, 0.0, dyn.S(0, 0));
  std::vector<GridMoments> moments;
  moments.reserve(f_values.size());
  for (std::size_t t = 0; t < f_values.size(); ++t) {
    density = grid_step_discriminative(density, f_values[t], q_values[t], dyn, transition);
    moments.push_back(grid_moments(density));
  }
  return moments;
}

std::vector<GridMoments> grid_filter_generative(const GridSpec& grid, const Matrix& observations,
                                                const LinearGaussianDynamics& dyn,
                                                const GenerativeObservationModel& obs) {
  require_scalar(dyn);
  const GridTransition transition(grid, dyn);
  const auto llt = factor_lambda(obs.Lambda);
  GridDensity density = GridDensity::gaussian(grid, 0.0, dyn.S(0, 0));
  std::vector<GridMoments> moments;
  moments.reserve(static_cast<std::size_t>(observations.rows()));
  for (Eigen::Index t = 0; t < observations.rows(); ++t) {
    const Vector x = observations.row(t).transpose();
    density = posterior_generative(grid, transition.predict(density),
                                   gaussian_log_likelihood(x, obs, llt));
    moments.push_back(grid_moments(density));
  }
  return moments;
}

OracleCheckReport oracle_check(const OracleCheckOptions& options) {
  if (options.configurations < 1 || options.steps < 1) {
    throw Error(ErrorKind::kInvalidArgument, "oracle check needs configurations and steps");
  }
  const RandomSource base(options.seed);
  OracleCheckReport report;
  for (int c = 0; c < options.configurations; ++c) {
    RandomSource rng = base.derive(static_cast<std::uint64_t>(c));
    OracleCheckCase item;
    item.a = -0.9 + 1.8 * rng.uniform();
    item.gamma = 0.2 + 0.8 * rng.uniform();
    item.varying_q = c % 2 == 1;
    const auto dyn = LinearGaussianDynamics::from_transition(Matrix::Constant(1, 1, item.a),
                                                             Matrix::Constant(1, 1, item.gamma));
    item.S = dyn.S(0, 0);
    const double sd = std::sqrt(item.S);
    const double q_fraction = 0.05 + 0.85 * rng.uniform();
    // Var f(x) + E q = S, as for a discriminative model consistent with the chain.
    const double gain = std::sqrt((1.0 - q_fraction) / 1.49);

    // Observations x_t = z_t + noise drawn from the chain itself.
    std::vector<double> f_values;
    std::vector<double> q_values;
    double z = sd * rng.gaussian();
    for (int t = 0; t < options.steps; ++t) {
      if (t > 0) z = item.a * z + std::sqrt(item.gamma) * rng.gaussian();
      const double x = z + 0.7 * sd * rng.gaussian();
      if (item.varying_q) {
        f_values.push_back(0.6 * sd * std::tanh(x / sd));
        q_values.push_back(item.S * (0.05 + 0.55 / (1.0 + std::exp(-x / sd))));
      } else {
        f_values.push_back(gain * x);
        q_values.push_back(q_fraction * item.S);
      }
    }

    const auto grid = GridSpec::centered(item.S, 8.0, options.points);
    const auto moments = grid_filter_discriminative(grid, f_values, q_values, dyn);

    GaussianBelief belief = initial_belief(dyn);
    for (int t = 0; t < options.steps; ++t) {
      const auto index = static_cast<std::size_t>(t);
      const double f = f_values[index];
      const double q = q_values[index];
      const DiscriminativeObservationModel obs{
          [f](const Vector&) { return Vector::Constant(1, f); },
          [q](const Vector&) { return Matrix::Constant(1, 1, q); }};
      belief = dkf_step(belief, Vector::Zero(1), dyn, obs);
      item.max_mean_deviation =
          std::max(item.max_mean_deviation, std::abs(belief.mean(0) - moments[index].mean));
      item.max_variance_deviation = std::max(
          item.max_variance_deviation, std::abs(belief.covariance(0, 0) - moments[index].variance));
    }
    report.max_mean_deviation = std::max(report.max_mean_deviation, item.max_mean_deviation);
    report.max_variance_deviation =
        std::max(report.max_variance_deviation, item.max_variance_deviation);
    report.cases.push_back(item);
  }
  return report;
}

}  // namespace dkf
