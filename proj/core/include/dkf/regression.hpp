#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "dkf/filters.hpp"
#include "dkf/random.hpp"

namespace dkf {

// Squared-exponential kernel s^2 exp(-|x - x'|^2 / (2 l^2)).
struct RbfKernel {
  double length_scale = 1.0;
  double signal_variance = 1.0;

  double operator()(const Vector& a, const Vector& b) const;
  // Rows of `a` and `b` are points.
  Matrix gram(const Matrix& a, const Matrix& b) const;
};

// Per-coordinate affine standardization fitted on training inputs. Constant
// columns keep scale 1.
struct InputScaler {
  Vector mean;
  Vector scale;

  static InputScaler fit(const Matrix& rows);
  static InputScaler identity(Eigen::Index dim);

  Vector apply(const Vector& x) const;
  Matrix apply_rows(const Matrix& rows) const;
};

struct GpHyperparameters {
  RbfKernel kernel;
  double noise_variance = 0.1;
};

// Log density of `targets` under N(0, K + noise I) for inputs given as rows.
double gp_log_marginal_likelihood(const Matrix& inputs, const Vector& targets,
                                  const GpHyperparameters& hyper);

// Same, with the gradient with respect to
// (log length_scale, log signal_variance, log noise_variance).
double gp_log_marginal_likelihood(const Matrix& inputs, const Vector& targets,
                                  const GpHyperparameters& hyper, Vector& gradient);

// Independent zero-mean GP per output dimension, sharing the training inputs.
class GpRegressor {
 public:
  // `inputs` are raw (unscaled) rows; `scaler` is applied internally.
  GpRegressor(InputScaler scaler, const Matrix& inputs, Matrix targets,
              std::vector<GpHyperparameters> hyper);

  // Rebuilds a model from already-scaled training inputs (deserialization).
  static GpRegressor from_scaled_inputs(InputScaler scaler, Matrix scaled_inputs, Matrix targets,
                                        std::vector<GpHyperparameters> hyper);

  Eigen::Index input_dim() const { return scaler_.mean.size(); }
  Eigen::Index output_dim() const { return targets_.cols(); }
  Eigen::Index size() const { return scaled_inputs_.rows(); }

  const InputScaler& scaler() const { return scaler_; }
  // Training inputs after scaling.
  const Matrix& scaled_inputs() const { return scaled_inputs_; }
  const Matrix& targets() const { return targets_; }
  const std::vector<GpHyperparameters>& hyperparameters() const { return hyper_; }

  // K(x, X') (K(X', X') + s I)^-1 Z'_i for every output i.
  Vector predict_mean(const Vector& x) const;
  // Posterior variance of f_i(x) plus the noise variance, per output.
  Vector predict_q(const Vector& x) const;

 private:
  struct Output {
    Eigen::LLT<Matrix> factor;
    Vector weights;  // (K + s I)^-1 z
  };

  struct ScaledTag {};
  GpRegressor(ScaledTag, InputScaler scaler, Matrix scaled_inputs, Matrix targets,
              std::vector<GpHyperparameters> hyper);
  void factorize();

  InputScaler scaler_;
  Matrix scaled_inputs_;
  Matrix targets_;
  std::vector<GpHyperparameters> hyper_;
  std::vector<Output> outputs_;
};

struct GpFitOptions {
  // Training sets larger than this are subsampled uniformly without replacement.
  Eigen::Index subsample_cap = 1000;
  // Marginal likelihood is optimized on at most this many of the retained
  // points; 0 means use all of them.
  Eigen::Index hyperparameter_subset = 0;
  int starts = 8;
  int max_iterations = 100;
  bool standardize_inputs = true;
  std::uint64_t seed = 0;
};

// Start grid for the hyperparameter search, in order. Entry i uses
// length = {0.1, 1, 10}[i % 3] * median pairwise distance,
// signal = {0.1, 1}[(i / 3) % 2] * target variance,
// noise  = {0.01, 0.1}[(i / 6) % 2] * target variance.
std::vector<GpHyperparameters> gp_start_grid(double median_distance, double target_variance,
                                             int starts);

GpRegressor gp_fit(const Matrix& inputs, const Matrix& targets, const GpFitOptions& options = {});

inline Vector gp_predict_mean(const GpRegressor& model, const Vector& x) {
  return model.predict_mean(x);
}
inline Vector gp_predict_q(const GpRegressor& model, const Vector& x) {
  return model.predict_q(x);
}

// Single hidden layer tanh network R^m -> R^d with standardized inputs and outputs.
struct MlpWeights {
  Matrix W1;  // hidden x m
  Vector b1;  // hidden
  Matrix W2;  // d x hidden
  Vector b2;  // d
};

class MlpRegressor {
 public:
  MlpRegressor(InputScaler input_scaler, InputScaler output_scaler, MlpWeights weights);

  Eigen::Index input_dim() const { return weights_.W1.cols(); }
  Eigen::Index output_dim() const { return weights_.W2.rows(); }
  Eigen::Index hidden_width() const { return weights_.W1.rows(); }

  const InputScaler& input_scaler() const { return input_scaler_; }
  const InputScaler& output_scaler() const { return output_scaler_; }
  const MlpWeights& weights() const { return weights_; }

  Vector predict(const Vector& x) const;
  // d x m derivative of predict at x.
  Matrix jacobian(const Vector& x) const;

 private:
  InputScaler input_scaler_;
  InputScaler output_scaler_;
  MlpWeights weights_;
};

inline Vector mlp_predict(const MlpRegressor& model, const Vector& x) { return model.predict(x); }

struct MlpFitOptions {
  int hidden_width = 20;
  double weight_decay = 1e-4;
  int max_iterations = 1500;
  // Stop after this many iterations without a new best validation error.
  int patience = 100;
  double train_fraction = 0.70;
  double validation_fraction = 0.15;
};

// Row indices of the internal train/validation/test partition.
struct MlpPartition {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> validation;
  std::vector<Eigen::Index> test;
};

struct MlpFitResult {
  MlpRegressor model;
  MlpPartition partition;
  double train_mse = 0.0;
  double validation_mse = 0.0;
  int iterations = 0;
};

MlpFitResult mlp_fit_detailed(const Matrix& inputs, const Matrix& targets, RandomSource& rng,
                              const MlpFitOptions& options = {});

inline MlpRegressor mlp_fit(const Matrix& inputs, const Matrix& targets, RandomSource& rng,
                            const MlpFitOptions& options = {}) {
  return mlp_fit_detailed(inputs, targets, rng, options).model;
}

enum class QKind { kDiagonalFromGp, kConstantFromResiduals };

// Covariance function of the discriminative model.
struct QEstimate {
  QKind kind = QKind::kConstantFromResiduals;
  Matrix constant;
  std::shared_ptr<const GpRegressor> gp;

  Matrix operator()(const Vector& x) const;
};

// Second moment of residual rows with denominator n, floored to SPD.
Matrix residual_covariance(const Matrix& residuals);

// Constant Q from residuals z - f(x) over held-out rows.
QEstimate fit_residual_Q(const std::function<Vector(const Vector&)>& f, const Matrix& inputs,
                         const Matrix& targets);

enum class DkfVariant { kGp, kGpFreq, kNn };

std::string_view to_string(DkfVariant variant);

// Learned discriminative model: mean from a GP or MLP, plus its Q estimate.
struct DkfVariantModel {
  DkfVariant variant = DkfVariant::kGp;
  std::shared_ptr<const GpRegressor> gp;
  std::shared_ptr<const MlpRegressor> mlp;
  QEstimate Q;

  Vector mean(const Vector& x) const;
  DiscriminativeObservationModel as_observation_model() const;
};

struct VariantFitOptions {
  GpFitOptions gp;
  MlpFitOptions mlp;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

// Fits on the training segment (rows < split_index) only.
DkfVariantModel build_dkf_variant(DkfVariant variant, const TrajectoryDataset& dataset,
                                  const VariantFitOptions& options = {});

enum class GenerativeKind { kAffine, kMlp };

// Learned observation model p(x | z) for the KF/EKF/UKF baselines.
struct GenerativeFit {
  GenerativeKind kind = GenerativeKind::kAffine;
  Matrix H;
  Vector offset;
  std::shared_ptr<const MlpRegressor> mlp;
  Matrix Lambda;

  GenerativeObservationModel as_observation_model() const;
};

// x ~ H z + offset by least squares, Lambda from the residual second moment.
GenerativeFit fit_affine_observation(const Matrix& states, const Matrix& observations);

// x ~ MLP(z); Lambda from residuals on the network's held-out test rows.
GenerativeFit fit_mlp_observation(const Matrix& states, const Matrix& observations,
                                  RandomSource& rng, const MlpFitOptions& options = {});

}  // namespace dkf
