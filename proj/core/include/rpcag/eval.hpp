#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rpcag/graph.hpp"
#include "rpcag/matrixio.hpp"
#include "rpcag/solver.hpp"

namespace rpcag {

// Top right singular vectors of L as a d x n matrix with orthonormal rows.
struct Embedding {
  Matrix Q;
  Vector singular_values;
  Index d = 0;
  // Fewer components than requested were numerically available.
  bool truncated = false;
};

// d defaults to the numerical rank of L (sigma_i > 1e-10 sigma_max).
Embedding extract_embedding(const Matrix& L, std::optional<Index> d = std::nullopt);

struct ClusteringReport {
  std::vector<int> labels;
  double error_percent = 0.0;  // filled by callers that know the truth
  int kmeans_runs = 0;
  double best_run_inertia = 0.0;
};

// Lloyd iterations with k-means++ seeding on the columns of `points`. The
// restart with the smallest inertia wins, ties going to the lower run index.
ClusteringReport kmeans(const Matrix& points, int k, int runs, std::uint64_t seed,
                        unsigned jobs = 1);
ClusteringReport kmeans(const Embedding& embedding, int k, int runs, std::uint64_t seed,
                        bool scale_by_sigma = false, unsigned jobs = 1);

// Minimum-cost perfect matching on a square cost matrix (Hungarian method).
// Returns assignment[row] = column.
std::vector<Index> min_cost_assignment(const Matrix& cost);

// Percentage of samples misclassified under the best one-to-one mapping of
// predicted clusters onto true classes.
double clustering_error(std::span<const int> predicted, std::span<const int> truth);

struct GammaTrial {
  double gamma = 0.0;
  double error_percent = 0.0;
  int iterations = 0;
  Index rank = 0;
  bool converged = false;
  ClusteringReport report;
};

struct ClusterPipelineConfig {
  SolverConfig solver;  // gamma is overwritten from `gammas`
  GraphConfig graph;
  std::vector<double> gammas{0.0, 0.1, 1.0, 10.0};
  int k = 2;
  int runs = 10;
  std::uint64_t seed = 0;
  std::optional<Index> dim;
  bool scale_by_sigma = false;
  std::optional<ObservationMask> mask;
};

struct ClusterPipelineResult {
  std::vector<GammaTrial> trials;
  std::size_t best = 0;  // index into trials with the lowest error

  const GammaTrial& best_trial() const { return trials.at(best); }
};

// graph -> solve -> embedding -> k-means -> clustering error for every gamma
// in the grid; the grid point with the lowest error is selected.
ClusterPipelineResult cluster_pipeline(const DataMatrix& x, std::span<const int> truth,
                                       const ClusterPipelineConfig& cfg);

struct BackgroundResult {
  Matrix background;  // L
  Matrix foreground;  // S
  SolverResult solve;
};

// Low-rank background / sparse foreground split of a video whose columns are
// frames, with a dense kernel graph between frames.
BackgroundResult background_extract(const DataMatrix& frames, const SolverConfig& cfg,
                                    const GraphConfig& graph_cfg);

}  // namespace rpcag
