#include "rpcag/synth.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "rpcag/errors.hpp"
#include "rpcag/parallel.hpp"
#include "rpcag/random.hpp"

namespace rpcag {

namespace {

void check_generator_args(Index n, Index d, double rho) {
  if (n < 1) throw ConfigError("n must be positive");
  if (d < 1 || d > n) throw ConfigError("rank must lie in [1, n]");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
}

// Bernoulli(rho) support with +-1 (random) or sign(L) (coherent) values.
Matrix sparse_corruption(const Matrix& low_rank, double rho, SignScheme scheme, Rng& rng) {
  std::bernoulli_distribution hit(rho);
  std::bernoulli_distribution coin(0.5);
  Matrix s = Matrix::Zero(low_rank.rows(), low_rank.cols());
  for (Index j = 0; j < s.cols(); ++j)
    for (Index i = 0; i < s.rows(); ++i) {
      if (!hit(rng)) continue;
      if (scheme == SignScheme::random)
        s(i, j) = coin(rng) ? 1.0 : -1.0;
      else
        s(i, j) = low_rank(i, j) < 0.0 ? -1.0 : 1.0;
    }
  return s;
}

double parse_double(std::string_view token, std::string_view context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size())
    throw ConfigError("invalid number '" + std::string(token) + "' in " + std::string(context));
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s = s.substr(pos + 1);
  }
  return out;
}

}  // namespace

SignScheme parse_sign_scheme(std::string_view name) {
  if (name == "random") return SignScheme::random;
  if (name == "coherent") return SignScheme::coherent;
  throw ConfigError("unknown sign scheme '" + std::string(name) + "'");
}

std::string_view to_string(SignScheme scheme) {
  return scheme == SignScheme::random ? "random" : "coherent";
}

SyntheticInstance generate(Index n, Index d, double rho, SignScheme scheme, std::uint64_t seed) {
  check_generator_args(n, d, rho);
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  const Matrix a = gaussian_matrix(d, n, sd, rng);
  const Matrix b = gaussian_matrix(d, n, sd, rng);
  Matrix low_rank = a.transpose() * b;
  Matrix sparse = sparse_corruption(low_rank, rho, scheme, rng);
  return {DataMatrix(low_rank + sparse), std::move(low_rank), std::move(sparse), d, rho, scheme,
          seed, {}};
}

SyntheticInstance generate_clustered(Index n, Index d, double rho, SignScheme scheme,
                                     const ClusterShape& shape, std::uint64_t seed) {
  check_generator_args(n, d, rho);
  const int k = shape.k;
  if (k < 1 || k > n) throw ConfigError("cluster count must lie in [1, n]");
  if (!(shape.spread >= 0.0)) throw ConfigError("cluster spread must be nonnegative");
  if (!(shape.separation > 0.0)) throw ConfigError("cluster separation must be positive");
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  const double center_sd = sd * shape.separation;
  const Matrix a = gaussian_matrix(d, n, sd, rng);
  const Matrix centers = gaussian_matrix(d, k, center_sd, rng);
  const Matrix jitter = gaussian_matrix(d, n, center_sd * std::sqrt(shape.spread), rng);

  std::vector<int> labels(static_cast<std::size_t>(n));
  Matrix b(d, n);
  for (Index j = 0; j < n; ++j) {
    labels[j] = static_cast<int>(j % k);
    b.col(j) = centers.col(labels[j]) + jitter.col(j);
  }
  Matrix low_rank = a.transpose() * b;
  Matrix sparse = sparse_corruption(low_rank, rho, scheme, rng);
  return {DataMatrix(low_rank + sparse), std::move(low_rank), std::move(sparse), d, rho, scheme,
          seed, std::move(labels)};
}

double reconstruction_error(const Matrix& L_hat, const Matrix& L_true) {
  if (L_hat.rows() != L_true.rows() || L_hat.cols() != L_true.cols())
    throw DataError("reconstruction error needs matrices of equal shape");
  const double ref = L_true.norm();
  if (!(ref > 0.0)) throw DataError("reference low-rank matrix is zero");
  const double ratio = (L_true - L_hat).norm() / ref;
  if (!(ratio > 0.0)) return kReconstructionErrorFloor;
  return std::max(kReconstructionErrorFloor, std::log10(ratio));
}

SweepParam parse_sweep_param(std::string_view name) {
  if (name == "rank" || name == "rank_frac" || name == "rank-frac") return SweepParam::rank_frac;
  if (name == "rho") return SweepParam::rho;
  if (name == "lambda") return SweepParam::lambda;
  if (name == "lambda-mult" || name == "lambda_mult") return SweepParam::lambda_mult;
  if (name == "gamma") return SweepParam::gamma;
  throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

std::string_view to_string(SweepParam param) {
  switch (param) {
    case SweepParam::rank_frac: return "rank";
    case SweepParam::rho: return "rho";
    case SweepParam::lambda: return "lambda";
    case SweepParam::lambda_mult: return "lambda-mult";
    case SweepParam::gamma: return "gamma";
  }
  return "?";
}

bool affects_instance(SweepParam param) {
  return param == SweepParam::rank_frac || param == SweepParam::rho;
}

SweepAxis SweepAxis::parse(std::string_view text) {
  SweepAxis axis;
  if (const auto eq = text.find('='); eq != std::string_view::npos) {
    axis.param = parse_sweep_param(text.substr(0, eq));
    for (auto tok : split(text.substr(eq + 1), '/')) axis.values.push_back(parse_double(tok, text));
    return axis;
  }
  const auto parts = split(text, ':');
  if (parts.size() == 2) {
    axis.param = parse_sweep_param(parts[0]);
    axis.values.push_back(parse_double(parts[1], text));
    return axis;
  }
  if (parts.size() != 4)
    throw ConfigError("axis '" + std::string(text) + "' must be name:start:stop:count");
  axis.param = parse_sweep_param(parts[0]);
  const double start = parse_double(parts[1], text);
  const double stop = parse_double(parts[2], text);
  const double count = parse_double(parts[3], text);
  if (count < 1 || count != std::floor(count))
    throw ConfigError("axis count must be a positive integer");
  const auto c = static_cast<int>(count);
  for (int i = 0; i < c; ++i)
    axis.values.push_back(c == 1 ? start : start + (stop - start) * i / (c - 1));
  return axis;
}

std::pair<SweepAxis, SweepAxis> parse_axes(std::string_view text) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError("--axes takes exactly two comma-separated axes");
  auto a = SweepAxis::parse(parts[0]);
  auto b = SweepAxis::parse(parts[1]);
  if (a.param == b.param) throw ConfigError("sweep axes must differ");
  return {std::move(a), std::move(b)};
}

CellJob make_cell_job(const SweepAxis& a1, std::size_t i, const SweepAxis& a2, std::size_t j,
                      const SweepFixed& fixed, std::uint64_t base_seed, int repeat) {
  double rank_frac = fixed.rank_frac;
  double rho = fixed.rho;
  bool absolute = fixed.lambda.has_value();
  double lambda = fixed.lambda.value_or(0.0);
  double lambda_mult = fixed.lambda_mult;
  double gamma = fixed.gamma;

  auto assign = [&](SweepParam p, double v) {
    switch (p) {
      case SweepParam::rank_frac: rank_frac = v; break;
      case SweepParam::rho: rho = v; break;
      case SweepParam::lambda: lambda = v; absolute = true; break;
      case SweepParam::lambda_mult: lambda_mult = v; absolute = false; break;
      case SweepParam::gamma: gamma = v; break;
    }
  };
  assign(a1.param, a1.values.at(i));
  assign(a2.param, a2.values.at(j));

  CellJob job;
  job.n = fixed.n;
  job.rank = std::max<Index>(1, static_cast<Index>(std::llround(rank_frac * fixed.n)));
  job.rho = rho;
  job.lambda = absolute ? lambda : lambda_mult * default_lambda(fixed.n, fixed.n);
  job.gamma = gamma;
  const std::uint64_t ki = affects_instance(a1.param) ? i : 0;
  const std::uint64_t kj = affects_instance(a2.param) ? j : 0;
  job.seed = derive_seed(base_seed, {ki, kj, static_cast<std::uint64_t>(repeat)});
  return job;
}

double run_cell_job(const CellJob& job, const SweepFixed& fixed) {
  const SyntheticInstance inst =
      fixed.clusters
          ? generate_clustered(job.n, job.rank, job.rho, fixed.scheme, *fixed.clusters, job.seed)
          : generate(job.n, job.rank, job.rho, fixed.scheme, job.seed);
  SolverConfig cfg = fixed.solver;
  cfg.lambda = job.lambda;
  cfg.gamma = job.gamma;
  cfg.seed = job.seed;

  std::optional<GraphLaplacian> phi;
  if (cfg.gamma > 0.0) phi = build_graph(inst.X, std::nullopt, fixed.graph);
  const SolverResult res = solve(inst.X, phi ? &*phi : nullptr, cfg);
  return reconstruction_error(res.L, inst.L_true);
}

PhaseDiagram phase_sweep(const SweepAxis& axis1, const SweepAxis& axis2, const SweepFixed& fixed,
                         std::uint64_t base_seed, int repeats, unsigned jobs) {
  if (axis1.values.empty() || axis2.values.empty()) throw ConfigError("sweep grids must be nonempty");
  if (repeats < 1) throw ConfigError("at least one seed per cell is required");

  const std::size_t n1 = axis1.values.size();
  const std::size_t n2 = axis2.values.size();
  const std::size_t total = n1 * n2 * static_cast<std::size_t>(repeats);
  std::vector<double> outcome(total, std::numeric_limits<double>::quiet_NaN());

  parallel_for(total, jobs, [&](std::size_t t) {
    const std::size_t cell = t / static_cast<std::size_t>(repeats);
    const int repeat = static_cast<int>(t % static_cast<std::size_t>(repeats));
    try {
      const CellJob job = make_cell_job(axis1, cell / n2, axis2, cell % n2, fixed, base_seed, repeat);
      outcome[t] = run_cell_job(job, fixed);
    } catch (const Error&) {
      // Left as NaN: the cell records a failure instead of a value.
    }
  });

  PhaseDiagram diagram{axis1, axis2, {}, fixed, base_seed, repeats};
  diagram.cells.resize(n1 * n2);
  for (std::size_t c = 0; c < n1 * n2; ++c) {
    PhaseCell& cell = diagram.cells[c];
    double sum = 0.0;
    for (int r = 0; r < repeats; ++r) {
      const double v = outcome[c * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r)];
      if (std::isnan(v)) {
        ++cell.failed;
      } else {
        cell.errors.push_back(v);
        sum += v;
      }
    }
    cell.mean_log_err = cell.errors.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : sum / static_cast<double>(cell.errors.size());
  }
  return diagram;
}

}  // namespace rpcag
