#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "rpcag/errors.hpp"
#include "rpcag/eval.hpp"
#include "rpcag/random.hpp"
#include "test_util.hpp"

using namespace rpcag;

TEST_CASE("embedding examples") {
  Matrix l = Matrix::Zero(2, 2);
  l(0, 0) = 3.0;
  l(1, 1) = 1.0;
  const Embedding e = extract_embedding(l, Index{1});
  CHECK(e.d == 1);
  CHECK(e.singular_values(0) == doctest::Approx(3.0));
  CHECK(std::abs(e.Q(0, 0)) == doctest::Approx(1.0));
  CHECK(e.Q(0, 1) == doctest::Approx(0.0));

  const Embedding z = extract_embedding(Matrix::Zero(3, 4));
  CHECK(z.d == 0);
  CHECK(z.truncated);
  CHECK_THROWS_AS(extract_embedding(l, Index{3}), ConfigError);
}

TEST_CASE("rank-3 embedding reproduces L") {
  std::mt19937_64 rng(1);
  const Matrix l = test::random_matrix(12, 3, rng) * test::random_matrix(3, 9, rng);
  const Embedding e = extract_embedding(l, Index{3});
  CHECK_FALSE(e.truncated);
  const Matrix u = l * e.Q.transpose() * e.singular_values.cwiseInverse().asDiagonal();
  CHECK(test::rel_diff(u * e.singular_values.asDiagonal() * e.Q, l) <= 1e-10);
  CHECK(extract_embedding(l).d == 3);
  const Embedding over = extract_embedding(l, Index{5});
  CHECK(over.truncated);
  CHECK(over.d == 3);
}

TEST_CASE("embedding rows are orthonormal") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix l = test::random_matrix(6 + trial % 4, 8, rng);
    const Embedding e = extract_embedding(l);
    CHECK((e.Q * e.Q.transpose() - Matrix::Identity(e.d, e.d)).norm() <= 1e-8);
    for (Index i = 1; i < e.d; ++i) CHECK(e.singular_values(i) <= e.singular_values(i - 1));
  }
}

TEST_CASE("k-means on separable clouds") {
  std::mt19937_64 rng(3);
  Matrix pts(2, 40);
  std::vector<int> truth(40);
  for (Index j = 0; j < 40; ++j) {
    const double c = j < 20 ? 0.0 : 10.0;
    truth[j] = j < 20 ? 0 : 1;
    pts.col(j) = Vector::Constant(2, c) + test::random_matrix(2, 1, rng, 0.3);
  }
  const ClusteringReport r = kmeans(pts, 2, 5, 7);
  CHECK(clustering_error(r.labels, truth) == 0.0);
  double within = 0.0;
  for (int c = 0; c < 2; ++c) {
    Matrix members = c == 0 ? Matrix(pts.leftCols(20)) : Matrix(pts.rightCols(20));
    within += (members.colwise() - members.rowwise().mean()).squaredNorm();
  }
  CHECK(r.best_run_inertia == doctest::Approx(within));
  CHECK(r.kmeans_runs == 5);

  const ClusteringReport again = kmeans(pts, 2, 5, 7, 3);
  CHECK(again.labels == r.labels);
  CHECK(again.best_run_inertia == r.best_run_inertia);
}

TEST_CASE("k-means degenerate and invalid cases") {
  std::mt19937_64 rng(4);
  const Matrix pts = test::random_matrix(3, 6, rng);
  const ClusteringReport r = kmeans(pts, 6, 10, 1);
  CHECK(r.best_run_inertia == 0.0);
  std::vector<int> sorted = r.labels;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK_THROWS_AS(kmeans(pts, 7, 1, 1), ConfigError);
  CHECK_THROWS_AS(kmeans(pts, 1, 1, 1), ConfigError);
  CHECK_THROWS_AS(kmeans(pts, 2, 0, 1), ConfigError);
}

TEST_CASE("clustering error examples") {
  const std::vector<int> t{0, 0, 1, 1};
  CHECK(clustering_error(t, t) == 0.0);
  CHECK(clustering_error(std::vector<int>{1, 1, 0, 0}, t) == 0.0);
  CHECK(clustering_error(std::vector<int>{0, 1, 1, 1}, t) == 25.0);
  CHECK_THROWS_AS(clustering_error(std::vector<int>{0, 1}, t), DataError);
  CHECK(clustering_error(std::vector<int>{5, 5, 5, 5}, t) == 50.0);
}

TEST_CASE("clustering error matches enumeration and is relabeling invariant") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 2 + trial % 3;
    std::uniform_int_distribution<int> lab(0, k - 1);
    std::vector<int> truth(25), pred(25);
    for (auto& v : truth) v = lab(rng);
    for (auto& v : pred) v = lab(rng);
    const double e = clustering_error(pred, truth);
    CHECK(e == doctest::Approx(oracle::clustering_error_enumerate(pred, truth)));
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::vector<int> renamed(pred.size());
      for (std::size_t i = 0; i < pred.size(); ++i) renamed[i] = perm[pred[i]];
      CHECK(clustering_error(renamed, truth) == e);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(clustering_error(pred, pred) == 0.0);
  }
}

TEST_CASE("Hungarian assignment matches brute force") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 1 + trial % 6;
    const Matrix c = test::random_matrix(n, n, rng);
    const auto a = min_cost_assignment(c);
    double ours = 0.0;
    for (Index i = 0; i < n; ++i) ours += c(i, a[i]);
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (Index i = 0; i < n; ++i) s += c(i, perm[i]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(ours == doctest::Approx(best));
  }
  CHECK_THROWS_AS(min_cost_assignment(Matrix::Zero(2, 3)), DataError);
}

TEST_CASE("background extraction on a static video") {
  std::mt19937_64 rng(7);
  const Matrix frame = test::random_matrix(64, 1, rng).cwiseAbs();
  const Matrix video = frame.replicate(1, 8);
  SolverConfig cfg;
  cfg.lambda = default_lambda(64, 8);
  cfg.gamma = 1.0;
  cfg.eps = 1e-12;
  cfg.max_iter = 2000;
  const BackgroundResult r = background_extract(DataMatrix(video), cfg, GraphConfig{});
  CHECK(r.foreground.norm() / video.norm() <= 1e-3);
  CHECK(test::rel_diff(r.background, video) <= 1e-3);
  CHECK_THROWS_AS(background_extract(DataMatrix(frame), cfg, GraphConfig{}), GraphError);
}

TEST_CASE("background extraction isolates a blob") {
  const ImageShape shape{16, 16};
  std::mt19937_64 rng(8);
  const Matrix bg = test::random_matrix(256, 1, rng).cwiseAbs();
  Matrix video = bg.replicate(1, 12);
  Matrix blob = Matrix::Zero(256, 12);
  for (Index r = 6; r < 10; ++r)
    for (Index c = 6; c < 10; ++c) blob(shape.offset(r, c), 5) = 3.0;
  video += blob;
  SolverConfig cfg;
  cfg.lambda = default_lambda(256, 12);
  cfg.eps = 1e-10;
  cfg.max_iter = 2000;
  const BackgroundResult res = background_extract(DataMatrix(video, shape), cfg, GraphConfig{});
  const double on_blob = (res.foreground.array() * (blob.array() != 0).cast<double>()).matrix().squaredNorm();
  CHECK(on_blob / blob.squaredNorm() >= 0.9);
}

TEST_CASE("cluster pipeline selects the best gamma") {
  std::mt19937_64 rng(9);
  const Index n = 30;
  Matrix x(20, n);
  std::vector<int> truth(n);
  const Matrix centers = test::random_matrix(20, 3, rng, 3.0);
  for (Index j = 0; j < n; ++j) {
    truth[j] = static_cast<int>(j % 3);
    x.col(j) = centers.col(truth[j]) + test::random_matrix(20, 1, rng, 0.1);
  }
  ClusterPipelineConfig cfg;
  cfg.solver.lambda = default_lambda(20, n);
  cfg.solver.max_iter = 300;
  cfg.k = 3;
  cfg.gammas = {0.0, 1.0};
  cfg.dim = 3;
  const ClusterPipelineResult r = cluster_pipeline(DataMatrix(x), truth, cfg);
  REQUIRE(r.trials.size() == 2);
  for (const auto& t : r.trials) CHECK(r.best_trial().error_percent <= t.error_percent);
  CHECK(r.best_trial().error_percent == 0.0);
  cfg.gammas.clear();
  CHECK_THROWS_AS(cluster_pipeline(DataMatrix(x), truth, cfg), ConfigError);
  CHECK_THROWS_AS(cluster_pipeline(DataMatrix(x), std::vector<int>(3, 0), ClusterPipelineConfig{}),
                  DataError);
}
