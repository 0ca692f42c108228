#pragma once

#include <Eigen/Dense>

namespace dkf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// (M + M^T) / 2
Matrix symmetrize(const Matrix& m);

// max |M - M^T| relative to max |M| (0 for the zero matrix).
double relative_asymmetry(const Matrix& m);

// Cholesky succeeds and every pivot is strictly positive.
bool is_positive_definite(const Matrix& m);

// Smallest eigenvalue of the symmetric part of m.
double min_eigenvalue(const Matrix& m);

// Inverse of an SPD matrix through a Cholesky solve, symmetrized.
// Throws Error(kCholeskyFailure) when the factorization fails.
Matrix spd_inverse(const Matrix& m);

// Largest eigenvalue modulus of a square matrix.
double spectral_radius(const Matrix& a);

bool all_finite(const Matrix& m);

}  // namespace dkf
