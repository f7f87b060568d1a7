#include "rpcag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/SVD>

#include "rpcag/errors.hpp"
#include "rpcag/parallel.hpp"
#include "rpcag/random.hpp"

namespace rpcag {

namespace {

constexpr int kLloydMaxIter = 100;
constexpr double kLloydRelTol = 1e-9;

struct KmeansRun {
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

Matrix plus_plus_seeds(const Matrix& x, int k, Rng& rng) {
  const Index n = x.cols();
  Matrix centers(x.rows(), k);
  std::uniform_int_distribution<Index> first(0, n - 1);
  centers.col(0) = x.col(first(rng));
  Vector d2 = (x.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2(pick);
        if (target <= 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    centers.col(c) = x.col(pick);
    d2 = d2.cwiseMin((x.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  }
  return centers;
}

KmeansRun lloyd(const Matrix& x, int k, std::uint64_t seed) {
  const Index n = x.cols();
  Rng rng(seed);
  Matrix centers = plus_plus_seeds(x, k, rng);
  KmeansRun run;
  run.labels.assign(static_cast<std::size_t>(n), 0);
  Vector dist(n);

  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kLloydMaxIter; ++it) {
    double inertia = 0.0;
    for (Index j = 0; j < n; ++j) {
      Index best = 0;
      const double d = (centers.colwise() - x.col(j)).colwise().squaredNorm().minCoeff(&best);
      run.labels[j] = static_cast<int>(best);
      dist(j) = d;
      inertia += d;
    }
    run.inertia = inertia;

    Matrix sums = Matrix::Zero(x.rows(), k);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index j = 0; j < n; ++j) {
      sums.col(run.labels[j]) += x.col(j);
      ++counts[run.labels[j]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.col(c) = sums.col(c) / static_cast<double>(counts[c]);
      } else {
        // Re-seed an empty cluster at the worst-served point.
        Index far = 0;
        dist.maxCoeff(&far);
        centers.col(c) = x.col(far);
        dist(far) = 0.0;
      }
    }
    if (previous - inertia <= kLloydRelTol * std::max(inertia, 1e-300)) break;
    previous = inertia;
  }

  // Final assignment against the last centers.
  double inertia = 0.0;
  for (Index j = 0; j < n; ++j) {
    Index best = 0;
    inertia += (centers.colwise() - x.col(j)).colwise().squaredNorm().minCoeff(&best);
    run.labels[j] = static_cast<int>(best);
  }
  run.inertia = inertia;
  return run;
}

std::vector<int> compact_labels(std::span<const int> labels, int& count) {
  std::map<int, int> ids;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto [it, inserted] = ids.try_emplace(l, static_cast<int>(ids.size()));
    out.push_back(it->second);
  }
  count = static_cast<int>(ids.size());
  return out;
}

}  // namespace

Embedding extract_embedding(const Matrix& L, std::optional<Index> d) {
  const Index max_d = std::min(L.rows(), L.cols());
  if (d && (*d < 1 || *d > max_d)) throw ConfigError("embedding dimension out of range");
  if (!L.allFinite()) throw NumericsError("embedding input contains non-finite entries");

  Eigen::BDCSVD<Matrix> svd(L, Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericsError("SVD failed to converge");
  const Vector& sigma = svd.singularValues();
  const Index rank = numerical_rank(sigma, 1e-10);
  const Index want = d.value_or(rank);

  Embedding e;
  e.d = std::min(want, rank);
  e.truncated = rank == 0 || want > rank;
  e.Q = svd.matrixV().leftCols(e.d).transpose();
  e.singular_values = sigma.head(e.d);
  return e;
}

ClusteringReport kmeans(const Matrix& points, int k, int runs, std::uint64_t seed, unsigned jobs) {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (k > points.cols()) throw ConfigError("k exceeds the number of points");
  if (runs < 1) throw ConfigError("at least one k-means run is required");
  if (points.rows() < 1) throw DataError("k-means needs at least one coordinate");

  std::vector<KmeansRun> results(static_cast<std::size_t>(runs));
  parallel_for(results.size(), jobs, [&](std::size_t r) {
    results[r] = lloyd(points, k, derive_seed(seed, {static_cast<std::uint64_t>(r)}));
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r)
    if (results[r].inertia < results[best].inertia) best = r;

  ClusteringReport report;
  report.labels = std::move(results[best].labels);
  report.kmeans_runs = runs;
  report.best_run_inertia = results[best].inertia;
  report.error_percent = std::numeric_limits<double>::quiet_NaN();
  return report;
}

ClusteringReport kmeans(const Embedding& embedding, int k, int runs, std::uint64_t seed,
                        bool scale_by_sigma, unsigned jobs) {
  if (embedding.d == 0) throw DataError("embedding has no components");
  if (!scale_by_sigma) return kmeans(embedding.Q, k, runs, seed, jobs);
  return kmeans(embedding.singular_values.asDiagonal() * embedding.Q, k, runs, seed, jobs);
}

std::vector<Index> min_cost_assignment(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw DataError("assignment cost matrix must be square");
  const Index n = cost.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation; column 0 is a virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Index i0 = match[j0];
      double delta = kInf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> assignment(static_cast<std::size_t>(n), 0);
  for (Index j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
  return assignment;
}

double clustering_error(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw DataError("predicted and true label vectors differ in length");
  if (predicted.empty()) return 0.0;

  int kp = 0;
  int kt = 0;
  const auto p = compact_labels(predicted, kp);
  const auto t = compact_labels(truth, kt);
  const Index size = std::max(kp, kt);
  Matrix overlap = Matrix::Zero(size, size);
  for (std::size_t i = 0; i < p.size(); ++i) overlap(p[i], t[i]) += 1.0;

  const auto assignment = min_cost_assignment(-overlap);
  double matched = 0.0;
  for (Index r = 0; r < size; ++r) matched += overlap(r, assignment[r]);
  const double n = static_cast<double>(predicted.size());
  return 100.0 * (n - matched) / n;
}

ClusterPipelineResult cluster_pipeline(const DataMatrix& x, std::span<const int> truth,
                                       const ClusterPipelineConfig& cfg) {
  if (static_cast<Index>(truth.size()) != x.samples())
    throw DataError("label count does not match the sample count");
  if (cfg.gammas.empty()) throw ConfigError("gamma grid is empty");

  std::optional<GraphLaplacian> phi;
  if (std::any_of(cfg.gammas.begin(), cfg.gammas.end(), [](double g) { return g > 0.0; }))
    phi = build_graph(x, cfg.mask, cfg.graph);

  ClusterPipelineResult out;
  for (double gamma : cfg.gammas) {
    SolverConfig sc = cfg.solver;
    sc.gamma = gamma;
    const SolverResult res = solve(x, phi ? &*phi : nullptr, sc);
    const Embedding emb = extract_embedding(res.L, cfg.dim);
    GammaTrial trial;
    trial.gamma = gamma;
    trial.iterations = res.iterations;
    trial.rank = res.principal_rank;
    trial.converged = res.converged;
    if (emb.d == 0) {
      trial.error_percent = 100.0;
    } else {
      trial.report = kmeans(emb, cfg.k, cfg.runs, cfg.seed, cfg.scale_by_sigma);
      trial.error_percent = clustering_error(trial.report.labels, truth);
      trial.report.error_percent = trial.error_percent;
    }
    out.trials.push_back(std::move(trial));
  }
  for (std::size_t i = 1; i < out.trials.size(); ++i)
    if (out.trials[i].error_percent < out.trials[out.best].error_percent) out.best = i;
  return out;
}

BackgroundResult background_extract(const DataMatrix& frames, const SolverConfig& cfg,
                                    const GraphConfig& graph_cfg) {
  if (frames.samples() < 2) throw GraphError("background extraction needs at least two frames");
  std::optional<GraphLaplacian> phi;
  if (cfg.gamma > 0.0) phi = build_graph(frames, std::nullopt, graph_cfg);
  SolverResult res = solve(frames, phi ? &*phi : nullptr, cfg);
  BackgroundResult out{res.L, res.S, std::move(res)};
  return out;
}

}  // namespace rpcag
