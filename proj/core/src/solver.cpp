#include "rpcag/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "rpcag/errors.hpp"
#include "rpcag/random.hpp"

namespace rpcag {

namespace {

constexpr double kDenominatorFloor = 1e-30;

double relative_change(double next, double prev) {
  const double d = next - prev;
  return d * d / std::max(prev * prev, kDenominatorFloor);
}

double relative_change(const Matrix& next, const Matrix& prev) {
  return (next - prev).squaredNorm() / std::max(prev.squaredNorm(), kDenominatorFloor);
}

void check_finite(const Matrix& m, const char* name, int iter) {
  if (!m.allFinite())
    throw NumericsError(std::string("non-finite ") + name + " at iteration " +
                        std::to_string(iter));
}

}  // namespace

void SolverConfig::validate() const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(lambda)) throw ConfigError("lambda must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be nonnegative");
  if (!positive(r1) || !positive(r2)) throw ConfigError("penalties r1, r2 must be positive");
  if (!positive(eps)) throw ConfigError("eps must be positive");
  if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (!positive(cg_tol)) throw ConfigError("cg_tol must be positive");
  if (cg_max_iter < 1) throw ConfigError("cg_max_iter must be at least 1");
  if (!positive(feasibility_tol)) throw ConfigError("feasibility tolerance must be positive");
}

double default_lambda(Index p, Index n) {
  return 1.0 / std::sqrt(static_cast<double>(std::max(p, n)));
}

double graph_penalty(const Matrix& W, const GraphLaplacian& phi, double gamma) {
  if (gamma == 0.0) return 0.0;
  return gamma * (W * phi.phi()).cwiseProduct(W).sum();
}

double objective(const Matrix& L, const Matrix& S, const GraphLaplacian* phi, double lambda,
                 double gamma) {
  double value = nuclear_norm(L) + lambda * S.lpNorm<1>();
  if (gamma != 0.0) {
    if (!phi) throw ConfigError("gamma > 0 requires a graph Laplacian");
    value += graph_penalty(L, *phi, gamma);
  }
  return value;
}

CgOutcome solve_shifted_laplacian(const GraphLaplacian& phi, double gamma, double shift,
                                  const Matrix& rhs, const Matrix& x0, double tol,
                                  int max_iter) {
  const Index n = phi.size();
  if (rhs.cols() != n || x0.rows() != rhs.rows() || x0.cols() != n)
    throw DataError("CG system dimensions do not match the Laplacian");

  // Work on transposes so every unknown vector is a contiguous column.
  const Matrix& a = phi.phi();
  auto apply = [&](const Matrix& v) -> Matrix { return gamma * (a * v) + shift * v; };

  const Matrix b = rhs.transpose();
  const Index m = b.cols();
  Matrix x = x0.transpose();
  Matrix r = b - apply(x);
  Matrix p = r;
  Vector rs = r.colwise().squaredNorm().transpose();
  const Vector target = (tol * b.colwise().norm()).array().square().matrix().transpose();

  Eigen::Array<bool, Eigen::Dynamic, 1> done(m);
  for (Index j = 0; j < m; ++j) {
    if (target(j) == 0.0) {
      x.col(j).setZero();
      done(j) = true;
    } else {
      done(j) = rs(j) <= target(j);
    }
    if (done(j)) p.col(j).setZero();
  }

  int it = 0;
  while (!done.all()) {
    if (it == max_iter)
      throw NumericsError("CG did not reach tolerance within " + std::to_string(max_iter) +
                          " iterations");
    ++it;
    const Matrix ap = apply(p);
    for (Index j = 0; j < m; ++j) {
      if (done(j)) continue;
      const double curvature = p.col(j).dot(ap.col(j));
      if (!(curvature > 0.0)) throw NumericsError("CG encountered non-positive curvature");
      const double alpha = rs(j) / curvature;
      x.col(j) += alpha * p.col(j);
      r.col(j) -= alpha * ap.col(j);
      const double rs_next = r.col(j).squaredNorm();
      if (rs_next <= target(j)) {
        done(j) = true;
        p.col(j).setZero();
      } else {
        p.col(j) = r.col(j) + (rs_next / rs(j)) * p.col(j);
      }
      rs(j) = rs_next;
    }
  }
  return {x.transpose(), it};
}

SvtResult update_L(const SolverState& state, const Matrix& X, const SolverConfig& cfg) {
  const double r = cfg.r1 + cfg.r2;
  const Matrix h1 = X - state.S + state.Z1 / cfg.r1;
  const Matrix h2 = state.W + state.Z2 / cfg.r2;
  return svt((cfg.r1 * h1 + cfg.r2 * h2) / r, 1.0 / r);
}

Matrix update_S(const Matrix& L_new, const Matrix& X, const SolverState& state,
                const SolverConfig& cfg) {
  Matrix s = soft_threshold(X - L_new + state.Z1 / cfg.r1, cfg.lambda / cfg.r1);
  if (!s.allFinite()) throw NumericsError("non-finite entries in the S update");
  return s;
}

Matrix update_W(const Matrix& L_new, const SolverState& state, const GraphLaplacian* phi,
                const SolverConfig& cfg) {
  const Matrix target = L_new - state.Z2 / cfg.r2;
  if (cfg.gamma == 0.0) return target;
  if (!phi) throw ConfigError("gamma > 0 requires a graph Laplacian");
  const Matrix& warm = state.W.size() == target.size() ? state.W : target;
  return solve_shifted_laplacian(*phi, cfg.gamma, cfg.r2, cfg.r2 * target, warm, cfg.cg_tol,
                                 cfg.cg_max_iter)
      .solution;
}

void update_duals(SolverState& state, const Matrix& X, const SolverConfig& cfg) {
  state.Z1 += cfg.r1 * (X - state.L - state.S);
  state.Z2 += cfg.r2 * (state.W - state.L);
}

SolverState initial_state(const Matrix& X, const SolverConfig& cfg) {
  SolverState st;
  if (cfg.init == InitScheme::random) {
    Rng rng(cfg.seed);
    st.L = uniform_matrix(X.rows(), X.cols(), rng);
    st.W = uniform_matrix(X.rows(), X.cols(), rng);
    st.S = uniform_matrix(X.rows(), X.cols(), rng);
  } else {
    st.L = X;
    st.S = Matrix::Zero(X.rows(), X.cols());
    st.W = X;
  }
  st.Z1 = X - st.L - st.S;
  st.Z2 = st.W - st.L;
  return st;
}

SolverResult solve(const DataMatrix& data, const GraphLaplacian* phi, const SolverConfig& cfg) {
  cfg.validate();
  const Matrix& X = data.values();
  if (cfg.gamma > 0.0) {
    if (!phi) throw ConfigError("gamma > 0 requires a graph Laplacian");
    if (phi->size() != X.cols())
      throw DataError("Laplacian size " + std::to_string(phi->size()) +
                      " does not match sample count " + std::to_string(X.cols()));
  }
  const GraphLaplacian* graph = cfg.gamma > 0.0 ? phi : nullptr;

  SolverResult result;
  const double x_norm = X.norm();
  if (x_norm == 0.0) {
    result.L = Matrix::Zero(X.rows(), X.cols());
    result.S = Matrix::Zero(X.rows(), X.cols());
    result.converged = result.stopped_by_tolerance = true;
    return result;
  }

  SolverState st = initial_state(X, cfg);
  std::array<double, 3> terms{nuclear_norm(st.L), cfg.lambda * st.S.lpNorm<1>(),
                              graph ? graph_penalty(st.W, *graph, cfg.gamma) : 0.0};
  result.history.reserve(static_cast<std::size_t>(std::min(cfg.max_iter, 4096)));

  for (st.k = 0; st.k < cfg.max_iter; ++st.k) {
    const int iter = st.k + 1;
    SvtResult low_rank = update_L(st, X, cfg);
    Matrix s_next = update_S(low_rank.matrix, X, st, cfg);
    // update_W reads Z2 and the previous W (warm start) from st.
    Matrix w_next = update_W(low_rank.matrix, st, graph, cfg);

    const Matrix z1_prev = st.Z1;
    const Matrix z2_prev = st.Z2;
    st.L = std::move(low_rank.matrix);
    st.S = std::move(s_next);
    st.W = std::move(w_next);
    update_duals(st, X, cfg);

    check_finite(st.L, "L", iter);
    check_finite(st.S, "S", iter);
    check_finite(st.W, "W", iter);
    check_finite(st.Z1, "Z1", iter);
    check_finite(st.Z2, "Z2", iter);

    const std::array<double, 3> next{low_rank.singular_values.sum(),
                                     cfg.lambda * st.S.lpNorm<1>(),
                                     graph ? graph_penalty(st.W, *graph, cfg.gamma) : 0.0};
    IterationRecord rec;
    rec.iter = iter;
    rec.nuclear = next[0];
    rec.l1 = next[1];
    rec.trace = next[2];
    rec.res_primal1 = (X - st.L - st.S).norm();
    rec.res_primal2 = (st.W - st.L).norm();
    result.history.push_back(rec);
    result.principal_rank = low_rank.rank();

    const bool small = relative_change(next[0], terms[0]) <= cfg.eps &&
                       relative_change(next[1], terms[1]) <= cfg.eps &&
                       relative_change(next[2], terms[2]) <= cfg.eps &&
                       relative_change(st.Z1, z1_prev) <= cfg.eps &&
                       relative_change(st.Z2, z2_prev) <= cfg.eps;
    terms = next;
    if (small) {
      result.stopped_by_tolerance = true;
      ++st.k;
      break;
    }
  }

  result.iterations = st.k;
  const IterationRecord& last = result.history.back();
  const bool feasible = last.res_primal1 / x_norm <= cfg.feasibility_tol &&
                        last.res_primal2 / std::max(1.0, st.L.norm()) <= cfg.feasibility_tol;
  result.converged = result.stopped_by_tolerance && feasible;
  result.L = std::move(st.L);
  result.S = std::move(st.S);
  return result;
}

}  // namespace rpcag
