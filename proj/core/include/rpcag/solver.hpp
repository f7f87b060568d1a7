#pragma once

#include <cstdint>
#include <vector>

#include "rpcag/graph.hpp"
#include "rpcag/matrixio.hpp"
#include "rpcag/prox.hpp"

namespace rpcag {

enum class InitScheme {
  random,  // seeded uniform(0, 1) L, S, W
  zero,    // L = X, S = 0, W = X
};

struct SolverConfig {
  double lambda = 0.0;  // sparsity weight, must be set
  double gamma = 0.0;   // graph weight; 0 is plain RPCA
  double r1 = 1.0;
  double r2 = 1.0;
  double eps = 1e-7;  // relative squared change tolerance
  int max_iter = 1000;
  double cg_tol = 1e-10;
  int cg_max_iter = 500;
  std::uint64_t seed = 0;
  InitScheme init = InitScheme::random;
  // Required relative primal feasibility for `converged`.
  double feasibility_tol = 1e-6;

  // Throws ConfigError on any violated positivity constraint.
  void validate() const;
};

// Primal (L, S, W) and dual (Z1, Z2) ADMM variables, all p x n.
struct SolverState {
  Matrix L, S, W, Z1, Z2;
  int k = 0;
};

struct IterationRecord {
  int iter = 0;
  double nuclear = 0.0;      // ||L||_*
  double l1 = 0.0;           // lambda * ||S||_1
  double trace = 0.0;        // gamma * tr(W Phi W^T)
  double res_primal1 = 0.0;  // ||X - L - S||_F
  double res_primal2 = 0.0;  // ||W - L||_F
};

struct SolverResult {
  Matrix L, S;
  bool converged = false;
  // All relative-change criteria fell below eps (independent of feasibility).
  bool stopped_by_tolerance = false;
  int iterations = 0;
  std::vector<IterationRecord> history;
  Index principal_rank = 0;
};

struct CgOutcome {
  Matrix solution;
  int iterations = 0;
};

// 1 / sqrt(max(n, p)).
double default_lambda(Index p, Index n);

// ||L||_* + lambda ||S||_1 + gamma tr(L Phi L^T). phi may be null when gamma = 0.
double objective(const Matrix& L, const Matrix& S, const GraphLaplacian* phi, double lambda,
                 double gamma);

// gamma * tr(W Phi W^T), evaluated without forming the p x p product.
double graph_penalty(const Matrix& W, const GraphLaplacian& phi, double gamma);

// Solves W (gamma Phi + shift I) = rhs row by row with conjugate gradients,
// warm-started at x0. Each row converges to relative residual tol.
CgOutcome solve_shifted_laplacian(const GraphLaplacian& phi, double gamma, double shift,
                                  const Matrix& rhs, const Matrix& x0, double tol,
                                  int max_iter);

// L-subproblem: svt((r1 H1 + r2 H2) / (r1 + r2), 1 / (r1 + r2)) with
// H1 = X - S + Z1 / r1 and H2 = W + Z2 / r2.
SvtResult update_L(const SolverState& state, const Matrix& X, const SolverConfig& cfg);

// S-subproblem: soft_threshold(X - L + Z1 / r1, lambda / r1).
Matrix update_S(const Matrix& L_new, const Matrix& X, const SolverState& state,
                const SolverConfig& cfg);

// W-subproblem: r2 (gamma Phi + r2 I)^{-1} applied along the sample dimension
// to L - Z2 / r2. With gamma = 0 phi is not read and may be null.
Matrix update_W(const Matrix& L_new, const SolverState& state, const GraphLaplacian* phi,
                const SolverConfig& cfg);

// Dual ascent: Z1 += r1 (X - L - S), Z2 += r2 (W - L).
void update_duals(SolverState& state, const Matrix& X, const SolverConfig& cfg);

// Initial ADMM state per cfg.init; duals start at the primal residuals.
SolverState initial_state(const Matrix& X, const SolverConfig& cfg);

// Robust PCA on graphs:
//   min ||L||_* + lambda ||S||_1 + gamma tr(L Phi L^T)  s.t.  X = L + S
// by ADMM on the split L = W. phi is required when gamma > 0.
SolverResult solve(const DataMatrix& X, const GraphLaplacian* phi, const SolverConfig& cfg);

}  // namespace rpcag
