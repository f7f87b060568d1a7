#include "rpcag/prox.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "rpcag/errors.hpp"

namespace rpcag {

namespace {

Eigen::BDCSVD<Matrix> decompose(const Matrix& a, unsigned options) {
  if (!a.allFinite()) throw NumericsError("SVD input contains non-finite entries");
  Eigen::BDCSVD<Matrix> svd(a, options);
  if (svd.info() != Eigen::Success) throw NumericsError("SVD failed to converge");
  return svd;
}

}  // namespace

Matrix soft_threshold(const Matrix& x, double tau) {
  if (!(tau >= 0.0)) throw ConfigError("soft-threshold level must be nonnegative");
  return x.unaryExpr([tau](double v) {
    const double mag = std::abs(v) - tau;
    return mag > 0.0 ? std::copysign(mag, v) : 0.0;
  });
}

SvtResult svt(const Matrix& a, double tau) {
  if (!(tau >= 0.0)) throw ConfigError("SVT threshold must be nonnegative");
  const auto svd = decompose(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double floor = sigma.size() ? 1e-12 * sigma(0) : 0.0;

  Index keep = 0;
  while (keep < sigma.size() && sigma(keep) - tau > floor) ++keep;

  SvtResult out;
  out.singular_values = sigma.head(keep).array() - tau;
  out.left_vectors = svd.matrixU().leftCols(keep);
  out.right_vectors = svd.matrixV().leftCols(keep);
  out.matrix = out.left_vectors * out.singular_values.asDiagonal() * out.right_vectors.transpose();
  return out;
}

Vector singular_values(const Matrix& a) {
  return decompose(a, 0).singularValues();
}

double nuclear_norm(const Matrix& a) { return singular_values(a).sum(); }

Index numerical_rank(const Vector& sigma, double rel_tol) {
  if (sigma.size() == 0 || !(sigma(0) > 0.0)) return 0;
  return (sigma.array() > rel_tol * sigma(0)).count();
}

}  // namespace rpcag
