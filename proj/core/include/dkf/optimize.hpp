#pragma once

#include <functional>

#include "dkf/linalg.hpp"

namespace dkf {

// Limited-memory BFGS minimizer with a backtracking (Armijo) line search.
// Non-finite objective values are treated as rejected trial points.
struct LbfgsOptions {
  int max_iterations = 200;
  int memory = 10;
  double gradient_tolerance = 1e-8;   // on max |g|
  double function_tolerance = 1e-12;  // relative decrease
  double max_step = 0.0;              // cap on ||step||_2; 0 disables
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

// Called after each accepted iterate; returning false stops the run.
using IterationCallback = std::function<bool(int iteration, const Vector& x, double value)>;

LbfgsResult minimize_lbfgs(const Objective& objective, const Vector& x0,
                           const LbfgsOptions& options = {},
                           const IterationCallback& callback = {});

}  // namespace dkf
