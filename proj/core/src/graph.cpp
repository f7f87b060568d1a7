#include "rpcag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "rpcag/errors.hpp"

namespace rpcag {

DistanceMatrix::DistanceMatrix(Matrix omega) : omega_(std::move(omega)) {
  if (omega_.rows() != omega_.cols()) throw DataError("distance matrix must be square");
  for (Index j = 0; j < omega_.cols(); ++j) {
    if (omega_(j, j) != 0.0) throw DataError("distance matrix must have a zero diagonal");
    for (Index i = 0; i < j; ++i) {
      const double v = omega_(i, j);
      if (!std::isfinite(v) || v < 0.0 || v != omega_(j, i))
        throw DataError("distance matrix must be symmetric, finite and nonnegative");
    }
  }
}

double DistanceMatrix::min_off_diagonal() const {
  double best = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < omega_.cols(); ++j)
    for (Index i = 0; i < j; ++i) best = std::min(best, omega_(i, j));
  return best;
}

Adjacency::Adjacency(Matrix weights, double sigma2, std::optional<Index> knn)
    : weights_(std::move(weights)), sigma2_(sigma2), knn_(knn) {}

GraphLaplacian::GraphLaplacian(Matrix phi, Vector degrees)
    : phi_(std::move(phi)), degrees_(std::move(degrees)) {}

DistanceMatrix masked_distances(const DataMatrix& x, const ObservationMask& mask) {
  const Matrix& v = x.values();
  if (mask.rows() != v.rows() || mask.cols() != v.cols())
    throw DataError("mask shape does not match the data matrix");

  const Index n = v.cols();
  const Index p = v.rows();
  const auto& bits = mask.bits();
  const bool full = mask.missing_count() == 0;
  constexpr double kEmpty = -1.0;

  Matrix omega = Matrix::Zero(n, n);
  double max_finite = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < j; ++i) {
      double d;
      if (full) {
        d = std::sqrt((v.col(i) - v.col(j)).squaredNorm() / static_cast<double>(p));
      } else {
        double sum = 0.0;
        Index overlap = 0;
        for (Index l = 0; l < p; ++l) {
          if (bits(l, i) && bits(l, j)) {
            const double diff = v(l, i) - v(l, j);
            sum += diff * diff;
            ++overlap;
          }
        }
        d = overlap > 0 ? std::sqrt(sum / static_cast<double>(overlap)) : kEmpty;
      }
      omega(i, j) = omega(j, i) = d;
      max_finite = std::max(max_finite, d);
    }
  }
  if (!full) omega = (omega.array() == kEmpty).select(max_finite, omega);
  return DistanceMatrix(std::move(omega));
}

DistanceMatrix masked_distances(const DataMatrix& x) {
  return masked_distances(x, ObservationMask::all_observed(x.features(), x.samples()));
}

Adjacency adjacency_from_distances(const DistanceMatrix& omega, double sigma2,
                                   std::optional<Index> knn) {
  const Index n = omega.size();
  if (n < 2) throw DataError("adjacency needs at least two samples");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ConfigError("sigma2 must be positive");
  if (knn && (*knn < 1 || *knn > n - 1)) throw ConfigError("knn must lie in [1, n-1]");

  const double omega_min = omega.min_off_diagonal();
  const Matrix& o = omega.omega();
  Matrix a(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const double shift = o(i, j) - omega_min;
      a(i, j) = i == j ? 0.0 : std::exp(-shift * shift / sigma2);
    }

  if (knn) {
    Matrix kept = Matrix::Zero(n, n);
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      std::iota(order.begin(), order.end(), Index{0});
      std::erase(order, i);
      // Largest weights first; ties resolved by column index.
      std::stable_sort(order.begin(), order.end(),
                       [&](Index l, Index r) { return a(i, l) > a(i, r); });
      for (Index k = 0; k < *knn; ++k) kept(i, order[k]) = a(i, order[k]);
    }
    a = kept.cwiseMax(kept.transpose());
  }
  return Adjacency(std::move(a), sigma2, knn);
}

GraphLaplacian normalized_laplacian(const Adjacency& adjacency) {
  const Matrix& a = adjacency.weights();
  const Index n = a.rows();
  Vector degrees = a.rowwise().sum();
  Vector inv_sqrt(n);
  for (Index i = 0; i < n; ++i) {
    if (!(degrees(i) > 0.0)) throw GraphError("node " + std::to_string(i) + " has zero degree");
    inv_sqrt(i) = 1.0 / std::sqrt(degrees(i));
  }
  Matrix phi(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      phi(i, j) = (i == j ? 1.0 : 0.0) - a(i, j) * (inv_sqrt(i) * inv_sqrt(j));
  return GraphLaplacian(std::move(phi), std::move(degrees));
}

Adjacency build_adjacency(const DataMatrix& x, const std::optional<ObservationMask>& mask,
                          const GraphConfig& cfg) {
  if (x.samples() < 2) throw GraphError("a sample graph needs at least two samples");

  DataMatrix work = x;
  std::optional<ObservationMask> distance_mask = mask;
  if (cfg.tv) {
    const ObservationMask m =
        mask ? *mask : ObservationMask::all_observed(x.features(), x.samples());
    work = tv_denoise(work, m, cfg.tv_options);
    // Distances are taken on the cleaned images in full.
    distance_mask.reset();
  }
  if (cfg.standardize) work = standardize(work);

  const DistanceMatrix omega =
      distance_mask ? masked_distances(work, *distance_mask) : masked_distances(work);
  return adjacency_from_distances(omega, cfg.sigma2, cfg.knn);
}

GraphLaplacian build_graph(const DataMatrix& x, const std::optional<ObservationMask>& mask,
                           const GraphConfig& cfg) {
  return normalized_laplacian(build_adjacency(x, mask, cfg));
}

}  // namespace rpcag
