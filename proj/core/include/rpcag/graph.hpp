#pragma once

#include <optional>

#include "rpcag/matrixio.hpp"

namespace rpcag {

// Symmetric n x n matrix of pairwise sample distances with zero diagonal.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(Matrix omega);

  const Matrix& omega() const noexcept { return omega_; }
  Index size() const noexcept { return omega_.rows(); }
  // Smallest off-diagonal entry; the diagonal is excluded.
  double min_off_diagonal() const;

 private:
  Matrix omega_;
};

// Symmetric nonnegative weights in [0, 1], zero diagonal.
class Adjacency {
 public:
  Adjacency(Matrix weights, double sigma2, std::optional<Index> knn);

  const Matrix& weights() const noexcept { return weights_; }
  Index size() const noexcept { return weights_.rows(); }
  double sigma2() const noexcept { return sigma2_; }
  const std::optional<Index>& knn() const noexcept { return knn_; }

 private:
  Matrix weights_;
  double sigma2_;
  std::optional<Index> knn_;
};

// Phi = I - D^{-1/2} A D^{-1/2}.
class GraphLaplacian {
 public:
  GraphLaplacian(Matrix phi, Vector degrees);

  const Matrix& phi() const noexcept { return phi_; }
  const Vector& degrees() const noexcept { return degrees_; }
  Index size() const noexcept { return phi_.rows(); }

 private:
  Matrix phi_;
  Vector degrees_;
};

// Omega_ij = sqrt(sum_l M (x_i - x_j)^2 / sum_l M) over features observed in
// both columns. Pairs sharing no observed feature get the largest finite
// distance of the matrix.
DistanceMatrix masked_distances(const DataMatrix& x, const ObservationMask& mask);
DistanceMatrix masked_distances(const DataMatrix& x);

struct TvOptions {
  double weight = 0.1;
  int iters = 100;
};

// Isotropic TV inpainting/denoising of every column image:
//   min_u 1/2 sum_obs (u - f)^2 + weight * TV(u)
// solved by a primal-dual iteration with projected dual steps. Unobserved
// pixels carry no fidelity term. Requires an ImageShape on x.
DataMatrix tv_denoise(const DataMatrix& x, const ObservationMask& mask, const TvOptions& opts);

// Discrete isotropic TV seminorm with forward differences and Neumann
// boundary, the same discretization tv_denoise minimizes.
double total_variation(const Eigen::Ref<const Vector>& image, ImageShape shape);

// A_ij = exp(-(Omega_ij - omega_min)^2 / sigma2) off the diagonal. With knn,
// each row keeps its knn largest weights and the result is symmetrized by
// elementwise max.
Adjacency adjacency_from_distances(const DistanceMatrix& omega, double sigma2,
                                   std::optional<Index> knn = std::nullopt);

GraphLaplacian normalized_laplacian(const Adjacency& a);

struct GraphConfig {
  double sigma2 = 0.05;
  std::optional<Index> knn;
  bool standardize = true;
  bool tv = false;
  TvOptions tv_options;
};

// Adjacency stage of build_graph.
Adjacency build_adjacency(const DataMatrix& x, const std::optional<ObservationMask>& mask,
                          const GraphConfig& cfg);

// Full sample-graph pipeline: optional TV cleanup, standardization, masked
// distances, heat-kernel adjacency and normalized Laplacian.
GraphLaplacian build_graph(const DataMatrix& x, const std::optional<ObservationMask>& mask,
                           const GraphConfig& cfg);

}  // namespace rpcag
