#include "dkf/optimize.hpp"

#include <cmath>
#include <deque>

namespace dkf {

namespace {

struct CorrectionPair {
  Vector s;
  Vector y;
  double rho;
};

Vector two_loop_direction(const std::deque<CorrectionPair>& pairs, const Vector& grad) {
  Vector q = grad;
  std::vector<double> alpha(pairs.size());
  for (std::size_t i = pairs.size(); i-- > 0;) {
    alpha[i] = pairs[i].rho * pairs[i].s.dot(q);
    q -= alpha[i] * pairs[i].y;
  }
  if (!pairs.empty()) {
    const auto& last = pairs.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double beta = pairs[i].rho * pairs[i].y.dot(q);
    q += (alpha[i] - beta) * pairs[i].s;
  }
  return -q;
}

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& objective, const Vector& x0,
                           const LbfgsOptions& options, const IterationCallback& callback) {
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 50;

  LbfgsResult result;
  result.x = x0;
  Vector grad(x0.size());
  result.value = objective(result.x, grad);
  result.evaluations = 1;
  if (!std::isfinite(result.value) || !grad.allFinite()) return result;

  std::deque<CorrectionPair> pairs;
  Vector trial_grad(x0.size());
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (grad.cwiseAbs().maxCoeff() <= options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    Vector direction = two_loop_direction(pairs, grad);
    if (!(direction.dot(grad) < 0.0)) {
      pairs.clear();
      direction = -grad;
    }
    double step = 1.0;
    if (pairs.empty()) step = std::min(1.0, 1.0 / grad.norm());
    if (options.max_step > 0.0) {
      const double length = direction.norm() * step;
      if (length > options.max_step) step *= options.max_step / length;
    }
    const double slope = direction.dot(grad);

    bool accepted = false;
    Vector trial;
    double trial_value = 0.0;
    for (int k = 0; k < kMaxBacktracks; ++k) {
      trial = result.x + step * direction;
      trial_value = objective(trial, trial_grad);
      ++result.evaluations;
      if (std::isfinite(trial_value) && trial_grad.allFinite() &&
          trial_value <= result.value + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    CorrectionPair pair{trial - result.x, trial_grad - grad, 0.0};
    const double curvature = pair.s.dot(pair.y);
    if (curvature > 1e-12 * pair.s.norm() * pair.y.norm()) {
      pair.rho = 1.0 / curvature;
      pairs.push_back(std::move(pair));
      if (static_cast<int>(pairs.size()) > options.memory) pairs.pop_front();
    }

    const double decrease = result.value - trial_value;
    result.x = trial;
    grad = trial_grad;
    result.value = trial_value;
    result.iterations = iter + 1;

    if (callback && !callback(result.iterations, result.x, result.value)) break;
    if (decrease <= options.function_tolerance * std::max(1.0, std::abs(result.value))) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace dkf
