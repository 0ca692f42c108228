#include "dkf/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "dkf/errors.hpp"
#include "dkf/optimize.hpp"

namespace dkf {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  Matrix d2(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      d2(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    }
  }
  return d2;
}

Vector squared_distances_to(const Matrix& rows, const Vector& x) {
  return (rows.rowwise() - x.transpose()).rowwise().squaredNorm();
}

Matrix rbf_from_distances(const Matrix& d2, const RbfKernel& kernel) {
  const double inv = -0.5 / (kernel.length_scale * kernel.length_scale);
  return kernel.signal_variance * (d2.array() * inv).exp().matrix();
}

double population_variance(const Vector& v) {
  if (v.size() == 0) return 0.0;
  return (v.array() - v.mean()).square().mean();
}

double median_pairwise_distance(const Matrix& rows) {
  constexpr Eigen::Index kMaxRows = 400;
  const Eigen::Index n = std::min(rows.rows(), kMaxRows);
  std::vector<double> distances;
  distances.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      distances.push_back((rows.row(i) - rows.row(j)).norm());
    }
  }
  if (distances.empty()) return 1.0;
  auto mid = distances.begin() + static_cast<std::ptrdiff_t>(distances.size() / 2);
  std::nth_element(distances.begin(), mid, distances.end());
  return *mid > 0.0 ? *mid : 1.0;
}

Matrix select_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

// Log marginal likelihood from a precomputed squared-distance matrix.
double log_marginal_from_distances(const Matrix& d2, const Vector& y,
                                   const GpHyperparameters& hyper, Vector* gradient) {
  const Eigen::Index n = y.size();
  const Matrix K = rbf_from_distances(d2, hyper.kernel);
  Matrix Ky = K;
  Ky.diagonal().array() += hyper.noise_variance;
  Eigen::LLT<Matrix> llt(Ky);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Vector alpha = llt.solve(y);
  const double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
  const double value = -0.5 * y.dot(alpha) - log_det_half - 0.5 * static_cast<double>(n) * kLog2Pi;
  if (gradient) {
    Matrix W = llt.solve(Matrix::Identity(n, n));
    W = alpha * alpha.transpose() - W;
    const double ell2 = hyper.kernel.length_scale * hyper.kernel.length_scale;
    gradient->resize(3);
    (*gradient)(0) = 0.5 * (W.array() * K.array() * d2.array()).sum() / ell2;
    (*gradient)(1) = 0.5 * (W.array() * K.array()).sum();
    (*gradient)(2) = 0.5 * hyper.noise_variance * W.trace();
  }
  return value;
}

GpHyperparameters from_log(const Vector& theta) {
  return {{std::exp(theta(0)), std::exp(theta(1))}, std::exp(theta(2))};
}

GpHyperparameters optimize_hyperparameters(const Matrix& d2, const Vector& y, double median,
                                           double variance, const GpFitOptions& options) {
  const double n = static_cast<double>(y.size());
  const double scale = variance > 0.0 ? variance : 1.0;
  Vector lower(3), upper(3);
  lower << std::log(1e-3 * median), std::log(1e-6 * scale), std::log(1e-8 * scale);
  upper << std::log(1e3 * median), std::log(1e4 * scale), std::log(1e2 * scale);

  const Objective objective = [&](const Vector& theta, Vector& grad) {
    if ((theta.array() < lower.array()).any() || (theta.array() > upper.array()).any()) {
      grad.setZero(3);
      return std::numeric_limits<double>::infinity();
    }
    Vector g;
    const double value = log_marginal_from_distances(d2, y, from_log(theta), &g);
    if (!std::isfinite(value)) {
      grad.setZero(3);
      return std::numeric_limits<double>::infinity();
    }
    grad = -g / n;
    return -value / n;
  };

  LbfgsOptions lbfgs;
  lbfgs.max_iterations = options.max_iterations;
  lbfgs.gradient_tolerance = 1e-7;
  lbfgs.function_tolerance = 1e-12;
  lbfgs.max_step = 2.0;

  bool found = false;
  double best_value = std::numeric_limits<double>::infinity();
  Vector best_theta;
  for (const auto& start : gp_start_grid(median, scale, options.starts)) {
    Vector theta0(3);
    theta0 << std::log(start.kernel.length_scale), std::log(start.kernel.signal_variance),
        std::log(start.noise_variance);
    const LbfgsResult result = minimize_lbfgs(objective, theta0, lbfgs);
    if (std::isfinite(result.value) && result.value < best_value) {
      best_value = result.value;
      best_theta = result.x;
      found = true;
    }
  }
  if (!found) {
    throw Error(ErrorKind::kFitFailure, "no GP start produced a finite marginal likelihood");
  }
  return from_log(best_theta);
}

}  // namespace

double RbfKernel::operator()(const Vector& a, const Vector& b) const {
  return signal_variance * std::exp(-(a - b).squaredNorm() / (2.0 * length_scale * length_scale));
}

Matrix RbfKernel::gram(const Matrix& a, const Matrix& b) const {
  return rbf_from_distances(squared_distances(a, b), *this);
}

InputScaler InputScaler::fit(const Matrix& rows) {
  InputScaler s;
  s.mean = rows.colwise().mean().transpose();
  s.scale.resize(rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double sd = std::sqrt((rows.col(j).array() - s.mean(j)).square().mean());
    s.scale(j) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

InputScaler InputScaler::identity(Eigen::Index dim) {
  return {Vector::Zero(dim), Vector::Ones(dim)};
}

Vector InputScaler::apply(const Vector& x) const {
  return (x - mean).cwiseQuotient(scale);
}

Matrix InputScaler::apply_rows(const Matrix& rows) const {
  return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

double gp_log_marginal_likelihood(const Matrix& inputs, const Vector& targets,
                                  const GpHyperparameters& hyper) {
  return log_marginal_from_distances(squared_distances(inputs, inputs), targets, hyper, nullptr);
}

double gp_log_marginal_likelihood(const Matrix& inputs, const Vector& targets,
                                  const GpHyperparameters& hyper, Vector& gradient) {
  return log_marginal_from_distances(squared_distances(inputs, inputs), targets, hyper, &gradient);
}

GpRegressor::GpRegressor(InputScaler scaler, const Matrix& inputs, Matrix targets,
                         std::vector<GpHyperparameters> hyper)
    : scaler_(std::move(scaler)),
      scaled_inputs_(scaler_.apply_rows(inputs)),
      targets_(std::move(targets)),
      hyper_(std::move(hyper)) {
  factorize();
}

GpRegressor::GpRegressor(ScaledTag, InputScaler scaler, Matrix scaled_inputs, Matrix targets,
                         std::vector<GpHyperparameters> hyper)
    : scaler_(std::move(scaler)),
      scaled_inputs_(std::move(scaled_inputs)),
      targets_(std::move(targets)),
      hyper_(std::move(hyper)) {
  factorize();
}

GpRegressor GpRegressor::from_scaled_inputs(InputScaler scaler, Matrix scaled_inputs,
                                            Matrix targets, std::vector<GpHyperparameters> hyper) {
  return GpRegressor(ScaledTag{}, std::move(scaler), std::move(scaled_inputs), std::move(targets),
                     std::move(hyper));
}

void GpRegressor::factorize() {
  if (scaled_inputs_.rows() < 1 || scaled_inputs_.rows() != targets_.rows()) {
    throw Error(ErrorKind::kInvalidArgument, "GP needs at least one aligned training pair");
  }
  if (static_cast<Eigen::Index>(hyper_.size()) != targets_.cols()) {
    throw Error(ErrorKind::kInvalidArgument, "one hyperparameter set per output is required");
  }
  if (scaler_.mean.size() != scaled_inputs_.cols()) {
    throw Error(ErrorKind::kInvalidArgument, "scaler does not match the input dimension");
  }
  const Matrix d2 = squared_distances(scaled_inputs_, scaled_inputs_);
  outputs_.clear();
  outputs_.reserve(hyper_.size());
  for (std::size_t i = 0; i < hyper_.size(); ++i) {
    Matrix Ky = rbf_from_distances(d2, hyper_[i].kernel);
    Ky.diagonal().array() += hyper_[i].noise_variance;
    Output out{Eigen::LLT<Matrix>(Ky), Vector()};
    if (out.factor.info() != Eigen::Success) {
      throw Error(ErrorKind::kFitFailure, "GP Gram matrix is not positive definite");
    }
    out.weights = out.factor.solve(targets_.col(static_cast<Eigen::Index>(i)));
    outputs_.push_back(std::move(out));
  }
}

Vector GpRegressor::predict_mean(const Vector& x) const {
  const Vector d2 = squared_distances_to(scaled_inputs_, scaler_.apply(x));
  Vector mean(output_dim());
  for (std::size_t i = 0; i < outputs_.size(); ++i) {
    const Vector k = rbf_from_distances(d2, hyper_[i].kernel);
    mean(static_cast<Eigen::Index>(i)) = k.dot(outputs_[i].weights);
  }
  return mean;
}

Vector GpRegressor::predict_q(const Vector& x) const {
  const Vector d2 = squared_distances_to(scaled_inputs_, scaler_.apply(x));
  Vector q(output_dim());
  for (std::size_t i = 0; i < outputs_.size(); ++i) {
    const Vector k = rbf_from_distances(d2, hyper_[i].kernel);
    const Vector v = outputs_[i].factor.matrixL().solve(k);
    const double variance = std::max(0.0, hyper_[i].kernel.signal_variance - v.squaredNorm());
    q(static_cast<Eigen::Index>(i)) = variance + hyper_[i].noise_variance;
  }
  return q;
}

std::vector<GpHyperparameters> gp_start_grid(double median_distance, double target_variance,
                                             int starts) {
  constexpr double kLength[] = {0.1, 1.0, 10.0};
  constexpr double kSignal[] = {0.1, 1.0};
  constexpr double kNoise[] = {0.01, 0.1};
  std::vector<GpHyperparameters> grid;
  for (int i = 0; i < std::min(starts, 12); ++i) {
    grid.push_back({{kLength[i % 3] * median_distance, kSignal[(i / 3) % 2] * target_variance},
                    kNoise[(i / 6) % 2] * target_variance});
  }
  return grid;
}

GpRegressor gp_fit(const Matrix& inputs, const Matrix& targets, const GpFitOptions& options) {
  if (inputs.rows() != targets.rows()) {
    throw Error(ErrorKind::kInvalidArgument, "GP inputs and targets differ in length");
  }
  if (inputs.rows() < 2) throw Error(ErrorKind::kInsufficientData, "GP needs at least 2 points");

  RandomSource rng(options.seed);
  std::vector<Eigen::Index> keep(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) keep[static_cast<std::size_t>(i)] = i;
  if (options.subsample_cap > 0 && inputs.rows() > options.subsample_cap) {
    const auto order = rng.permutation(static_cast<std::size_t>(inputs.rows()));
    keep.assign(order.begin(), order.begin() + options.subsample_cap);
    std::sort(keep.begin(), keep.end());
  }
  const Matrix X = select_rows(inputs, keep);
  const Matrix Z = select_rows(targets, keep);

  InputScaler scaler =
      options.standardize_inputs ? InputScaler::fit(X) : InputScaler::identity(X.cols());
  const Matrix Xs = scaler.apply_rows(X);

  // Optional smaller subset (leading rows of a seeded shuffle) for the search.
  std::vector<Eigen::Index> search(static_cast<std::size_t>(Xs.rows()));
  for (Eigen::Index i = 0; i < Xs.rows(); ++i) search[static_cast<std::size_t>(i)] = i;
  if (options.hyperparameter_subset > 0 && Xs.rows() > options.hyperparameter_subset) {
    const auto order = rng.permutation(static_cast<std::size_t>(Xs.rows()));
    search.assign(order.begin(), order.begin() + options.hyperparameter_subset);
    std::sort(search.begin(), search.end());
  }
  const Matrix Xsearch = select_rows(Xs, search);
  const Matrix d2 = squared_distances(Xsearch, Xsearch);
  const double median = median_pairwise_distance(Xsearch);

  std::vector<GpHyperparameters> hyper;
  for (Eigen::Index i = 0; i < Z.cols(); ++i) {
    const Vector y = select_rows(Z.col(i), search);
    hyper.push_back(optimize_hyperparameters(d2, y, median, population_variance(y), options));
  }
  return GpRegressor(std::move(scaler), X, Z, std::move(hyper));
}

MlpRegressor::MlpRegressor(InputScaler input_scaler, InputScaler output_scaler, MlpWeights weights)
    : input_scaler_(std::move(input_scaler)),
      output_scaler_(std::move(output_scaler)),
      weights_(std::move(weights)) {
  const auto h = weights_.W1.rows();
  if (weights_.b1.size() != h || weights_.W2.cols() != h || weights_.b2.size() != weights_.W2.rows() ||
      input_scaler_.mean.size() != weights_.W1.cols() ||
      output_scaler_.mean.size() != weights_.W2.rows()) {
    throw Error(ErrorKind::kInvalidArgument, "inconsistent MLP weight shapes");
  }
}

Vector MlpRegressor::predict(const Vector& x) const {
  const Vector hidden = (weights_.W1 * input_scaler_.apply(x) + weights_.b1).array().tanh().matrix();
  const Vector out = weights_.W2 * hidden + weights_.b2;
  return out.cwiseProduct(output_scaler_.scale) + output_scaler_.mean;
}

Matrix MlpRegressor::jacobian(const Vector& x) const {
  const Vector hidden = (weights_.W1 * input_scaler_.apply(x) + weights_.b1).array().tanh().matrix();
  const Vector slope = (1.0 - hidden.array().square()).matrix();
  Matrix J = weights_.W2 * slope.asDiagonal() * weights_.W1;
  J = output_scaler_.scale.asDiagonal() * J;
  return J.array().rowwise() / input_scaler_.scale.transpose().array();
}

namespace {

struct MlpLayout {
  Eigen::Index m, h, d;
  Eigen::Index size() const { return h * m + h + d * h + d; }
};

MlpWeights unpack(const Vector& p, const MlpLayout& L) {
  MlpWeights w;
  Eigen::Index offset = 0;
  w.W1 = Eigen::Map<const Matrix>(p.data() + offset, L.h, L.m);
  offset += L.h * L.m;
  w.b1 = p.segment(offset, L.h);
  offset += L.h;
  w.W2 = Eigen::Map<const Matrix>(p.data() + offset, L.d, L.h);
  offset += L.d * L.h;
  w.b2 = p.segment(offset, L.d);
  return w;
}

Vector pack(const MlpWeights& w) {
  Vector p(w.W1.size() + w.b1.size() + w.W2.size() + w.b2.size());
  p << Eigen::Map<const Vector>(w.W1.data(), w.W1.size()), w.b1,
      Eigen::Map<const Vector>(w.W2.data(), w.W2.size()), w.b2;
  return p;
}

// Columns are samples (standardized).
double mlp_loss(const Vector& p, const MlpLayout& L, const Matrix& X, const Matrix& Y,
                double decay, Vector* grad) {
  const MlpWeights w = unpack(p, L);
  const double n = static_cast<double>(X.cols());
  const Matrix hidden = ((w.W1 * X).colwise() + w.b1).array().tanh().matrix();
  const Matrix out = (w.W2 * hidden).colwise() + w.b2;
  const Matrix err = out - Y;
  const double value = 0.5 * err.squaredNorm() / n +
                       0.5 * decay * (w.W1.squaredNorm() + w.W2.squaredNorm());
  if (grad) {
    const Matrix e = err / n;
    const Matrix dW2 = e * hidden.transpose() + decay * w.W2;
    const Vector db2 = e.rowwise().sum();
    const Matrix dA = ((w.W2.transpose() * e).array() * (1.0 - hidden.array().square())).matrix();
    const Matrix dW1 = dA * X.transpose() + decay * w.W1;
    const Vector db1 = dA.rowwise().sum();
    *grad = pack({dW1, db1, dW2, db2});
  }
  return value;
}

double mlp_mse(const Vector& p, const MlpLayout& L, const Matrix& X, const Matrix& Y) {
  if (X.cols() == 0) return 0.0;
  const MlpWeights w = unpack(p, L);
  const Matrix hidden = ((w.W1 * X).colwise() + w.b1).array().tanh().matrix();
  const Matrix out = (w.W2 * hidden).colwise() + w.b2;
  return (out - Y).squaredNorm() / static_cast<double>(X.cols() * Y.rows());
}

double original_scale_mse(const MlpRegressor& model, const Matrix& inputs, const Matrix& targets,
                          const std::vector<Eigen::Index>& rows) {
  if (rows.empty()) return 0.0;
  double total = 0.0;
  for (auto r : rows) {
    total += (model.predict(inputs.row(r).transpose()) - targets.row(r).transpose()).squaredNorm();
  }
  return total / static_cast<double>(rows.size() * static_cast<std::size_t>(targets.cols()));
}

}  // namespace

MlpFitResult mlp_fit_detailed(const Matrix& inputs, const Matrix& targets, RandomSource& rng,
                              const MlpFitOptions& options) {
  if (inputs.rows() != targets.rows()) {
    throw Error(ErrorKind::kInvalidArgument, "MLP inputs and targets differ in length");
  }
  const Eigen::Index n = inputs.rows();
  if (n < options.hidden_width || n < 3) {
    throw Error(ErrorKind::kInsufficientData, "MLP needs at least hidden_width training rows");
  }
  const auto order = rng.permutation(static_cast<std::size_t>(n));
  const auto n_train = static_cast<std::size_t>(std::floor(options.train_fraction * static_cast<double>(n)));
  const auto n_val =
      static_cast<std::size_t>(std::floor(options.validation_fraction * static_cast<double>(n)));
  MlpPartition part;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(order[i]);
    if (i < n_train) {
      part.train.push_back(row);
    } else if (i < n_train + n_val) {
      part.validation.push_back(row);
    } else {
      part.test.push_back(row);
    }
  }
  for (auto* rows : {&part.train, &part.validation, &part.test}) std::sort(rows->begin(), rows->end());

  const Matrix X_train = select_rows(inputs, part.train);
  const Matrix Y_train = select_rows(targets, part.train);
  InputScaler in_scaler = InputScaler::fit(X_train);
  InputScaler out_scaler = InputScaler::fit(Y_train);
  const Matrix Xt = in_scaler.apply_rows(X_train).transpose();
  const Matrix Yt = out_scaler.apply_rows(Y_train).transpose();
  const Matrix Xv = in_scaler.apply_rows(select_rows(inputs, part.validation)).transpose();
  const Matrix Yv = out_scaler.apply_rows(select_rows(targets, part.validation)).transpose();

  const MlpLayout layout{inputs.cols(), options.hidden_width, targets.cols()};
  MlpWeights init{Matrix(layout.h, layout.m), Vector::Zero(layout.h), Matrix(layout.d, layout.h),
                  Vector::Zero(layout.d)};
  const double a1 = std::sqrt(6.0 / static_cast<double>(layout.m + layout.h));
  for (Eigen::Index i = 0; i < layout.h; ++i) {
    for (Eigen::Index j = 0; j < layout.m; ++j) init.W1(i, j) = a1 * (2.0 * rng.uniform() - 1.0);
  }
  const double a2 = std::sqrt(6.0 / static_cast<double>(layout.h + layout.d));
  for (Eigen::Index i = 0; i < layout.d; ++i) {
    for (Eigen::Index j = 0; j < layout.h; ++j) init.W2(i, j) = a2 * (2.0 * rng.uniform() - 1.0);
  }

  const Objective objective = [&](const Vector& p, Vector& grad) {
    return mlp_loss(p, layout, Xt, Yt, options.weight_decay, &grad);
  };
  const bool has_validation = Xv.cols() > 0;
  Vector best = pack(init);
  double best_val = has_validation ? mlp_mse(best, layout, Xv, Yv) : mlp_loss(best, layout, Xt, Yt, options.weight_decay, nullptr);
  int since_best = 0;
  const IterationCallback callback = [&](int, const Vector& p, double value) {
    const double val = has_validation ? mlp_mse(p, layout, Xv, Yv) : value;
    if (val < best_val) {
      best_val = val;
      best = p;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      return false;
    }
    return true;
  };
  LbfgsOptions lbfgs;
  lbfgs.max_iterations = options.max_iterations;
  lbfgs.gradient_tolerance = 1e-12;
  lbfgs.function_tolerance = 0.0;
  const LbfgsResult run = minimize_lbfgs(objective, pack(init), lbfgs, callback);
  if (!std::isfinite(run.value) || !best.allFinite()) {
    throw Error(ErrorKind::kFitFailure, "MLP training produced a non-finite loss");
  }

  MlpRegressor model(std::move(in_scaler), std::move(out_scaler), unpack(best, layout));
  MlpFitResult result{std::move(model), std::move(part), 0.0, 0.0, run.iterations};
  result.train_mse = original_scale_mse(result.model, inputs, targets, result.partition.train);
  result.validation_mse =
      original_scale_mse(result.model, inputs, targets, result.partition.validation);
  return result;
}

Matrix QEstimate::operator()(const Vector& x) const {
  if (kind == QKind::kDiagonalFromGp) return gp->predict_q(x).asDiagonal();
  return constant;
}

Matrix residual_covariance(const Matrix& residuals) {
  if (residuals.rows() < 1) {
    throw Error(ErrorKind::kInsufficientData, "no residuals to estimate a covariance from");
  }
  return floor_covariance(residuals.transpose() * residuals /
                          static_cast<double>(residuals.rows()));
}

QEstimate fit_residual_Q(const std::function<Vector(const Vector&)>& f, const Matrix& inputs,
                         const Matrix& targets) {
  if (inputs.rows() != targets.rows()) {
    throw Error(ErrorKind::kInvalidArgument, "held-out inputs and targets differ in length");
  }
  const auto d = targets.cols();
  if (targets.rows() < d + 1) {
    std::ostringstream msg;
    msg << "need at least " << d + 1 << " held-out pairs, got " << targets.rows();
    throw Error(ErrorKind::kInsufficientData, msg.str());
  }
  Matrix residuals(targets.rows(), d);
  for (Eigen::Index r = 0; r < targets.rows(); ++r) {
    residuals.row(r) = targets.row(r) - f(inputs.row(r).transpose()).transpose();
  }
  QEstimate q;
  q.kind = QKind::kConstantFromResiduals;
  q.constant = residual_covariance(residuals);
  return q;
}

std::string_view to_string(DkfVariant variant) {
  switch (variant) {
    case DkfVariant::kGp:
      return "dkf-gp";
    case DkfVariant::kGpFreq:
      return "dkf-gp-freq";
    case DkfVariant::kNn:
      return "dkf-nn";
  }
  return "unknown";
}

Vector DkfVariantModel::mean(const Vector& x) const {
  return mlp ? mlp->predict(x) : gp->predict_mean(x);
}

DiscriminativeObservationModel DkfVariantModel::as_observation_model() const {
  DiscriminativeObservationModel model;
  if (mlp) {
    model.f = [net = mlp](const Vector& x) { return net->predict(x); };
  } else {
    model.f = [regressor = gp](const Vector& x) { return regressor->predict_mean(x); };
  }
  model.Q = [q = Q](const Vector& x) { return q(x); };
  return model;
}

DkfVariantModel build_dkf_variant(DkfVariant variant, const TrajectoryDataset& dataset,
                                  const VariantFitOptions& options) {
  const Matrix X = dataset.train_observations();
  const Matrix Z = dataset.train_states();
  if (X.rows() == 0) throw Error(ErrorKind::kInsufficientData, "empty training segment");

  const RandomSource base(options.seed);
  GpFitOptions gp_options = options.gp;
  gp_options.seed = base.derive(1).seed();

  DkfVariantModel model;
  model.variant = variant;
  switch (variant) {
    case DkfVariant::kGp: {
      model.gp = std::make_shared<const GpRegressor>(gp_fit(X, Z, gp_options));
      model.Q.kind = QKind::kDiagonalFromGp;
      model.Q.gp = model.gp;
      break;
    }
    case DkfVariant::kGpFreq: {
      const Eigen::Index n = X.rows();
      const auto holdout = static_cast<Eigen::Index>(
          std::floor(options.holdout_fraction * static_cast<double>(n)));
      if (holdout < Z.cols() + 1 || n - holdout < 2) {
        throw Error(ErrorKind::kInsufficientData, "training segment too short for a 20% holdout");
      }
      const Eigen::Index fit_rows = n - holdout;
      model.gp = std::make_shared<const GpRegressor>(
          gp_fit(X.topRows(fit_rows), Z.topRows(fit_rows), gp_options));
      model.Q = fit_residual_Q([gp = model.gp](const Vector& x) { return gp->predict_mean(x); },
                               X.bottomRows(holdout), Z.bottomRows(holdout));
      break;
    }
    case DkfVariant::kNn: {
      RandomSource rng = base.derive(2);
      MlpFitResult fit = mlp_fit_detailed(X, Z, rng, options.mlp);
      model.mlp = std::make_shared<const MlpRegressor>(std::move(fit.model));
      model.Q = fit_residual_Q([net = model.mlp](const Vector& x) { return net->predict(x); },
                               select_rows(X, fit.partition.test),
                               select_rows(Z, fit.partition.test));
      break;
    }
  }
  return model;
}

GenerativeObservationModel GenerativeFit::as_observation_model() const {
  if (kind == GenerativeKind::kAffine) return GenerativeObservationModel::affine(H, offset, Lambda);
  GenerativeObservationModel model;
  model.h = [net = mlp](const Vector& z) { return net->predict(z); };
  model.jacobian = [net = mlp](const Vector& z) { return net->jacobian(z); };
  model.Lambda = Lambda;
  return model;
}

GenerativeFit fit_affine_observation(const Matrix& states, const Matrix& observations) {
  if (states.rows() != observations.rows()) {
    throw Error(ErrorKind::kInvalidArgument, "states and observations differ in length");
  }
  const auto n = states.rows();
  const auto d = states.cols();
  Matrix design(n, d + 1);
  design << states, Vector::Ones(n);
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (n < d + 2 || qr.rank() < d + 1) {
    throw Error(ErrorKind::kRankDeficient, "states do not span the affine design");
  }
  const Matrix coef = qr.solve(observations);  // (d+1) x m
  GenerativeFit fit;
  fit.kind = GenerativeKind::kAffine;
  fit.H = coef.topRows(d).transpose();
  fit.offset = coef.row(d).transpose();
  fit.Lambda = residual_covariance(observations - design * coef);
  return fit;
}

GenerativeFit fit_mlp_observation(const Matrix& states, const Matrix& observations,
                                  RandomSource& rng, const MlpFitOptions& options) {
  MlpFitResult result = mlp_fit_detailed(states, observations, rng, options);
  GenerativeFit fit;
  fit.kind = GenerativeKind::kMlp;
  fit.mlp = std::make_shared<const MlpRegressor>(std::move(result.model));
  const auto& rows = result.partition.test.empty() ? result.partition.train : result.partition.test;
  Matrix residuals(static_cast<Eigen::Index>(rows.size()), observations.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    residuals.row(static_cast<Eigen::Index>(i)) =
        observations.row(rows[i]) - fit.mlp->predict(states.row(rows[i]).transpose()).transpose();
  }
  fit.Lambda = residual_covariance(residuals);
  return fit;
}

}  // namespace dkf
