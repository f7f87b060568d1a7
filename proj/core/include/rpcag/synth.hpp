#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rpcag/graph.hpp"
#include "rpcag/matrixio.hpp"
#include "rpcag/solver.hpp"

namespace rpcag {

enum class SignScheme { random, coherent };

SignScheme parse_sign_scheme(std::string_view name);
std::string_view to_string(SignScheme scheme);

// X = L_true + S_true with L_true = A^T B (A, B d x n, i.i.d. N(0, 1/n)) and a
// Bernoulli(rho) support for S_true carrying +-1 values.
struct SyntheticInstance {
  DataMatrix X;
  Matrix L_true;
  Matrix S_true;
  Index rank = 0;
  double rho = 0.0;
  SignScheme scheme = SignScheme::random;
  std::uint64_t seed = 0;
  // Cluster index per column; empty for the unclustered generator.
  std::vector<int> labels;
};

SyntheticInstance generate(Index n, Index d, double rho, SignScheme scheme, std::uint64_t seed);

// Variant whose B-columns are drawn around k Gaussian centers so that the
// columns of X carry a sample graph. Centers ~ N(0, separation^2 / n);
// members scatter around their center with variance spread * separation^2 / n.
struct ClusterShape {
  int k = 3;
  double separation = 1.0;
  double spread = 0.05;
};

SyntheticInstance generate_clustered(Index n, Index d, double rho, SignScheme scheme,
                                     const ClusterShape& shape, std::uint64_t seed);

// log10(||L_true - L_hat||_F / ||L_true||_F), clamped below at -16.
double reconstruction_error(const Matrix& L_hat, const Matrix& L_true);
inline constexpr double kReconstructionErrorFloor = -16.0;

enum class SweepParam {
  rank_frac,    // d / n
  rho,          // corruption fraction
  lambda,       // absolute sparsity weight
  lambda_mult,  // multiple of 1 / sqrt(max(n, p))
  gamma,        // graph weight
};

SweepParam parse_sweep_param(std::string_view name);
std::string_view to_string(SweepParam param);
// True for parameters that change the generated instance.
bool affects_instance(SweepParam param);

struct SweepAxis {
  SweepParam param = SweepParam::rank_frac;
  std::vector<double> values;

  // "name:start:stop:count" (linear, inclusive) or "name=v1/v2/..." lists.
  static SweepAxis parse(std::string_view text);
};

// Parses "axis,axis" into exactly two axes.
std::pair<SweepAxis, SweepAxis> parse_axes(std::string_view text);

struct SweepFixed {
  Index n = 100;
  double rank_frac = 0.1;
  double rho = 0.1;
  SignScheme scheme = SignScheme::random;
  std::optional<ClusterShape> clusters;  // use generate_clustered
  std::optional<double> lambda;  // absolute; default_lambda * lambda_mult when unset
  double lambda_mult = 1.0;
  double gamma = 0.0;
  SolverConfig solver;  // lambda, gamma and seed are overwritten per cell
  GraphConfig graph;
};

struct PhaseCell {
  double mean_log_err = 0.0;  // NaN if every repeat failed
  int failed = 0;
  std::vector<double> errors;  // successful repeats only
};

struct PhaseDiagram {
  SweepAxis axis1;
  SweepAxis axis2;
  std::vector<PhaseCell> cells;  // row-major, axis1 major
  SweepFixed fixed;
  std::uint64_t base_seed = 0;
  int repeats = 0;

  const PhaseCell& cell(std::size_t i, std::size_t j) const {
    return cells[i * axis2.values.size() + j];
  }
};

// Everything needed to run one (cell, repeat) job.
struct CellJob {
  Index n = 0;
  Index rank = 0;
  double rho = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  std::uint64_t seed = 0;
};

CellJob make_cell_job(const SweepAxis& a1, std::size_t i, const SweepAxis& a2, std::size_t j,
                      const SweepFixed& fixed, std::uint64_t base_seed, int repeat);

// Generate, build the graph from the columns of X when gamma > 0, solve and
// score one job.
double run_cell_job(const CellJob& job, const SweepFixed& fixed);

// Runs every (cell, repeat) job on a pool of `jobs` threads. Instance seeds
// depend only on the instance-defining coordinates, so cells that differ in
// lambda or gamma alone see identical data.
PhaseDiagram phase_sweep(const SweepAxis& axis1, const SweepAxis& axis2, const SweepFixed& fixed,
                         std::uint64_t base_seed, int repeats, unsigned jobs = 1);

}  // namespace rpcag
