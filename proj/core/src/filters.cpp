#include "dkf/filters.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "dkf/errors.hpp"

namespace dkf {

namespace {

constexpr double kRegularizeTolerance = 1e-12;
constexpr double kRegularizeClip = 1e-6;

void require_dims(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::kInvalidArgument, what);
}

struct Prediction {
  Vector mean;
  Matrix covariance;
};

Prediction predict(const GaussianBelief& belief, const LinearGaussianDynamics& dyn) {
  require_dims(belief.dim() == dyn.dim(), "belief and dynamics dimensions differ");
  return {dyn.A * belief.mean,
          symmetrize(dyn.A * belief.covariance * dyn.A.transpose() + dyn.Gamma)};
}

GaussianBelief linearized_update(const Prediction& pred, const Vector& innovation,
                                 const Matrix& H, const Matrix& Lambda) {
  require_dims(H.rows() == innovation.size() && H.cols() == pred.mean.size(),
               "observation matrix has the wrong shape");
  require_dims(Lambda.rows() == innovation.size() && Lambda.cols() == innovation.size(),
               "Lambda has the wrong shape");
  const Matrix innovation_cov = symmetrize(H * pred.covariance * H.transpose() + Lambda);
  Eigen::LLT<Matrix> llt(innovation_cov);
  if (llt.info() != Eigen::Success || !(llt.rcond() > std::numeric_limits<double>::epsilon())) {
    throw Error(ErrorKind::kSingularInnovation, "innovation covariance is singular");
  }
  const Matrix gain = llt.solve(H * pred.covariance).transpose();  // M H^T (H M H^T + Lambda)^-1
  const auto d = pred.mean.size();
  GaussianBelief out;
  out.mean = pred.mean + gain * innovation;
  out.covariance = symmetrize((Matrix::Identity(d, d) - gain * H) * pred.covariance);
  return out;
}

Matrix observation_jacobian(const GenerativeObservationModel& obs, const Vector& z) {
  if (obs.jacobian) return obs.jacobian(z);
  if (obs.allow_finite_difference) return finite_difference_jacobian(obs.h, z);
  throw Error(ErrorKind::kJacobianUnavailable,
              "no analytic Jacobian and finite differences are disabled");
}

Eigen::LLT<Matrix> checked_cholesky(const Matrix& m, ErrorKind kind, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all()) {
    throw Error(kind, std::string(what) + " is not positive definite");
  }
  return llt;
}

std::string eigenvalue_report(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(m), Eigen::EigenvaluesOnly);
  std::ostringstream out;
  out << "posterior precision eigenvalues [";
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    out << (i ? ", " : "") << eig.eigenvalues()(i);
  }
  out << ']';
  return out.str();
}

}  // namespace

GenerativeObservationModel GenerativeObservationModel::affine(const Matrix& H, const Vector& offset,
                                                              const Matrix& Lambda) {
  require_dims(offset.size() == H.rows(), "offset length must match H rows");
  GenerativeObservationModel model;
  model.h = [H, offset](const Vector& z) -> Vector { return H * z + offset; };
  model.jacobian = [H](const Vector&) -> Matrix { return H; };
  model.Lambda = Lambda;
  model.H = H;
  model.offset = offset;
  return model;
}

GenerativeObservationModel GenerativeObservationModel::linear(const Matrix& H,
                                                              const Matrix& Lambda) {
  return affine(H, Vector::Zero(H.rows()), Lambda);
}

double UkfParameters::lambda_for(Eigen::Index d) const {
  const auto dd = static_cast<double>(d);
  return alpha * alpha * (dd + kappa_for(d)) - dd;
}

void UkfParameters::validate(Eigen::Index d) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "UKF alpha must lie in (0, 1]");
  }
  if (!(static_cast<double>(d) + lambda_for(d) > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "UKF scaling gives a non-positive d + lambda");
  }
}

GaussianBelief initial_belief(const LinearGaussianDynamics& dyn) {
  return {Vector::Zero(dyn.dim()), dyn.S};
}

Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& h,
                                  const Vector& z) {
  const Vector h0 = h(z);
  Matrix J(h0.size(), z.size());
  Vector probe = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double step = 1e-5 * (1.0 + std::abs(z(i)));
    probe(i) = z(i) + step;
    const Vector up = h(probe);
    probe(i) = z(i) - step;
    const Vector down = h(probe);
    probe(i) = z(i);
    J.col(i) = (up - down) / (2.0 * step);
  }
  return J;
}

GaussianBelief kalman_step(const GaussianBelief& belief, const Vector& x,
                           const LinearGaussianDynamics& dyn,
                           const GenerativeObservationModel& obs) {
  if (!obs.is_affine()) {
    throw Error(ErrorKind::kInvalidArgument, "kalman_step needs an affine observation model");
  }
  const Prediction pred = predict(belief, dyn);
  const Matrix& H = *obs.H;
  require_dims(x.size() == H.rows(), "observation length does not match H");
  const Vector innovation = x - (H * pred.mean + *obs.offset);
  return linearized_update(pred, innovation, H, obs.Lambda);
}

GaussianBelief ekf_step(const GaussianBelief& belief, const Vector& x,
                        const LinearGaussianDynamics& dyn,
                        const GenerativeObservationModel& obs) {
  const Prediction pred = predict(belief, dyn);
  const Matrix H = observation_jacobian(obs, pred.mean);
  const Vector innovation = x - obs.h(pred.mean);
  return linearized_update(pred, innovation, H, obs.Lambda);
}

GaussianBelief ukf_step(const GaussianBelief& belief, const Vector& x,
                        const LinearGaussianDynamics& dyn,
                        const GenerativeObservationModel& obs, const UkfParameters& params) {
  const Prediction pred = predict(belief, dyn);
  const auto d = pred.mean.size();
  params.validate(d);
  const double lambda = params.lambda_for(d);
  const double spread = static_cast<double>(d) + lambda;

  const auto llt = checked_cholesky(pred.covariance, ErrorKind::kCholeskyFailure,
                                    "predicted covariance");
  const Matrix offsets = std::sqrt(spread) * Matrix(llt.matrixL());

  const Eigen::Index count = 2 * d + 1;
  Matrix points(d, count);
  points.col(0) = pred.mean;
  for (Eigen::Index i = 0; i < d; ++i) {
    points.col(1 + i) = pred.mean + offsets.col(i);
    points.col(1 + d + i) = pred.mean - offsets.col(i);
  }
  Vector mean_weights = Vector::Constant(count, 0.5 / spread);
  Vector cov_weights = mean_weights;
  mean_weights(0) = lambda / spread;
  cov_weights(0) = lambda / spread + (1.0 - params.alpha * params.alpha + params.beta);

  const Vector first = obs.h(points.col(0));
  const auto m = first.size();
  require_dims(x.size() == m, "observation length does not match h");
  Matrix images(m, count);
  images.col(0) = first;
  for (Eigen::Index j = 1; j < count; ++j) images.col(j) = obs.h(points.col(j));

  const Vector predicted_obs = images * mean_weights;
  Matrix innovation_cov = obs.Lambda;
  Matrix cross_cov = Matrix::Zero(d, m);
  for (Eigen::Index j = 0; j < count; ++j) {
    const Vector dx = images.col(j) - predicted_obs;
    const Vector dz = points.col(j) - pred.mean;
    innovation_cov.noalias() += cov_weights(j) * dx * dx.transpose();
    cross_cov.noalias() += cov_weights(j) * dz * dx.transpose();
  }
  innovation_cov = symmetrize(innovation_cov);
  Eigen::LLT<Matrix> innov_llt(innovation_cov);
  if (innov_llt.info() != Eigen::Success ||
      !(innov_llt.rcond() > std::numeric_limits<double>::epsilon())) {
    throw Error(ErrorKind::kSingularInnovation, "UKF innovation covariance is singular");
  }
  const Matrix gain = innov_llt.solve(cross_cov.transpose()).transpose();
  GaussianBelief out;
  out.mean = pred.mean + gain * (x - predicted_obs);
  out.covariance = symmetrize(pred.covariance - gain * innovation_cov * gain.transpose());
  return out;
}

Matrix regularize_Q(const Matrix& Qx, const Matrix& S, bool* changed) {
  if (changed) *changed = false;
  require_dims(Qx.rows() == S.rows() && Qx.cols() == S.cols() && S.rows() == S.cols(),
               "Q and S must be square and of equal size");
  const Matrix Q = symmetrize(Qx);
  // Q v = lambda S v with V^T S V = I, i.e. the eigenpairs of S^-1/2 Q S^-1/2.
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(Q, symmetrize(S),
                                                       Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::kInvalidArgument, "S must be symmetric positive definite");
  }
  const Vector& values = eig.eigenvalues();
  if (values.minCoeff() > kRegularizeTolerance && values.maxCoeff() <= 1.0 + kRegularizeTolerance) {
    return Qx;
  }
  if (changed) *changed = true;
  const Vector clipped = values.cwiseMax(kRegularizeClip).cwiseMin(1.0 - kRegularizeClip);
  const Matrix SV = S * eig.eigenvectors();
  return symmetrize(SV * clipped.asDiagonal() * SV.transpose());
}

GaussianBelief dkf_step(const GaussianBelief& belief, const Vector& x,
                        const LinearGaussianDynamics& dyn,
                        const DiscriminativeObservationModel& obs, const DkfOptions& options,
                        FilterDiagnostics* diagnostics) {
  const Prediction pred = predict(belief, dyn);
  const auto d = pred.mean.size();
  const Vector fx = obs.f(x);
  require_dims(fx.size() == d, "f(x) has the wrong dimension");
  Matrix Q = obs.Q(x);
  require_dims(Q.rows() == d && Q.cols() == d, "Q(x) has the wrong shape");
  if (options.regularize_q) {
    bool changed = false;
    Q = regularize_Q(Q, dyn.S, &changed);
    if (changed && diagnostics) ++diagnostics->q_regularizations;
  } else {
    Q = symmetrize(Q);
  }

  const Matrix I = Matrix::Identity(d, d);
  const auto q_llt = checked_cholesky(Q, ErrorKind::kInvalidPosterior, "Q(x)");
  const auto m_llt = checked_cholesky(pred.covariance, ErrorKind::kInvalidPosterior,
                                      "predicted covariance");
  const auto s_llt = checked_cholesky(dyn.S, ErrorKind::kInvalidPosterior, "S");
  const Matrix q_inv = q_llt.solve(I);
  const Matrix m_inv = m_llt.solve(I);
  const Matrix s_inv = s_llt.solve(I);

  Matrix precision = symmetrize(q_inv + m_inv - s_inv);
  Eigen::LLT<Matrix> p_llt(precision);
  const auto failed = [&p_llt] {
    return p_llt.info() != Eigen::Success ||
           !(p_llt.matrixLLT().diagonal().array() > 0.0).all();
  };
  if (failed()) {
    if (options.on_invalid_posterior == PosteriorFailurePolicy::kThrow) {
      throw Error(ErrorKind::kInvalidPosterior, eigenvalue_report(precision));
    }
    precision = symmetrize(q_inv + m_inv);
    p_llt.compute(precision);
    if (failed()) throw Error(ErrorKind::kInvalidPosterior, eigenvalue_report(precision));
    if (diagnostics) ++diagnostics->posterior_fallbacks;
  }

  GaussianBelief out;
  out.covariance = symmetrize(p_llt.solve(I));
  out.mean = out.covariance * (q_llt.solve(fx) + m_llt.solve(pred.mean));
  return out;
}

Matrix dkf_steady_state_covariance(const LinearGaussianDynamics& dyn, const Matrix& Q,
                                   int max_iterations) {
  const auto d = dyn.dim();
  const Matrix I = Matrix::Identity(d, d);
  const Matrix q_inv = spd_inverse(regularize_Q(Q, dyn.S));
  const Matrix s_inv = spd_inverse(dyn.S);
  Matrix sigma = dyn.S;
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Matrix M = symmetrize(dyn.A * sigma * dyn.A.transpose() + dyn.Gamma);
    const Matrix precision = symmetrize(q_inv + spd_inverse(M) - s_inv);
    Eigen::LLT<Matrix> llt(precision);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::kInvalidPosterior, eigenvalue_report(precision));
    }
    const Matrix next = symmetrize(llt.solve(I));
    const double change = (next - sigma).norm();
    sigma = next;
    if (change <= 1e-12 * sigma.norm()) return sigma;
  }
  std::ostringstream msg;
  msg << "steady-state covariance did not converge in " << max_iterations << " iterations";
  throw Error(ErrorKind::kNoConvergence, msg.str());
}

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::kKalman:
      return "kalman";
    case FilterKind::kEkf:
      return "ekf";
    case FilterKind::kUkf:
      return "ukf";
    case FilterKind::kDkf:
      return "dkf";
  }
  return "unknown";
}

FilterRun run_filter(FilterKind kind, const Matrix& observations, const FilterModels& models,
                     Eigen::Index first_t) {
  const bool generative = kind != FilterKind::kDkf;
  if (generative && !models.generative) {
    throw Error(ErrorKind::kInvalidArgument,
                std::string(to_string(kind)) + " needs a generative observation model");
  }
  if (!generative && !models.discriminative) {
    throw Error(ErrorKind::kInvalidArgument, "dkf needs a discriminative observation model");
  }
  FilterRun run;
  run.beliefs.reserve(static_cast<std::size_t>(observations.rows()));
  GaussianBelief belief = initial_belief(models.dynamics);
  for (Eigen::Index row = 0; row < observations.rows(); ++row) {
    const Vector x = observations.row(row).transpose();
    try {
      switch (kind) {
        case FilterKind::kKalman:
          belief = kalman_step(belief, x, models.dynamics, *models.generative);
          break;
        case FilterKind::kEkf:
          belief = ekf_step(belief, x, models.dynamics, *models.generative);
          break;
        case FilterKind::kUkf:
          belief = ukf_step(belief, x, models.dynamics, *models.generative, models.ukf);
          break;
        case FilterKind::kDkf:
          belief = dkf_step(belief, x, models.dynamics, *models.discriminative, models.dkf,
                            &run.diagnostics);
          break;
      }
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << to_string(kind) << " step failed at t=" << first_t + row << ": " << e.what();
      throw FilterStepError(e.kind(), msg.str(), static_cast<long>(first_t + row));
    }
    run.beliefs.push_back(belief);
  }
  return run;
}

FilterRun run_filter(FilterKind kind, const TrajectoryDataset& dataset,
                     const FilterModels& models) {
  return run_filter(kind, dataset.test_observations(), models, dataset.split_index);
}

}  // namespace dkf
