#pragma once

#include "rpcag/matrixio.hpp"

namespace rpcag {

// Entrywise sign(x) * max(|x| - tau, 0).
Matrix soft_threshold(const Matrix& x, double tau);

// Singular value thresholding D_tau(A) = P Omega_tau(Sigma) Q^T, the proximal
// map of tau * ||.||_*. Only the factors whose thresholded singular value is
// positive are kept.
struct SvtResult {
  Matrix matrix;
  Vector singular_values;  // post-threshold, nonincreasing, all > 0
  Matrix left_vectors;     // p x r
  Matrix right_vectors;    // n x r

  Index rank() const noexcept { return singular_values.size(); }
};

SvtResult svt(const Matrix& a, double tau);

// Singular values of a, nonincreasing.
Vector singular_values(const Matrix& a);
double nuclear_norm(const Matrix& a);

// Count of singular values above rel_tol * sigma_max.
Index numerical_rank(const Vector& sigma, double rel_tol = 1e-12);

}  // namespace rpcag
