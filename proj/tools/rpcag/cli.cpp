#include "cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "rpcag/errors.hpp"
#include "rpcag/eval.hpp"
#include "rpcag/graph.hpp"
#include "rpcag/matrixio.hpp"
#include "rpcag/parallel.hpp"
#include "rpcag/solver.hpp"
#include "rpcag/synth.hpp"
#include "rpcag/version.hpp"

namespace rpcag::cli {

namespace {

using json = nlohmann::ordered_json;

std::string to_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string to_text(const std::string& v) { return v; }
template <class T>
  requires std::is_integral_v<T>
std::string to_text(T v) {
  return std::to_string(v);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Effective value of every output-affecting option, in declaration order.
class Recorder {
 public:
  void add(std::string name, std::function<std::string()> value,
           std::function<bool()> present = [] { return true; }) {
    entries_.push_back({std::move(name), std::move(value), std::move(present)});
  }

  json dump() const {
    json out = json::object();
    for (const auto& e : entries_)
      if (e.present()) out[e.name] = e.value();
    return out;
  }

 private:
  struct Entry {
    std::string name;
    std::function<std::string()> value;
    std::function<bool()> present;
  };
  std::vector<Entry> entries_;
};

template <class T>
CLI::Option* option(CLI::App* app, Recorder& rec, const std::string& name, T& var,
                    const std::string& help) {
  rec.add(name, [&var] { return to_text(var); });
  return app->add_option("--" + name, var, help)->capture_default_str();
}

template <class T>
CLI::Option* option(CLI::App* app, Recorder& rec, const std::string& name, std::optional<T>& var,
                    const std::string& help) {
  rec.add(name, [&var] { return to_text(*var); }, [&var] { return var.has_value(); });
  return app->add_option("--" + name, var, help);
}

CLI::Option* flag(CLI::App* app, Recorder& rec, const std::string& name, bool& var,
                  const std::string& help) {
  rec.add(name, [&var] { return std::string(var ? "true" : "false"); });
  return app->add_flag("--" + name, var, help);
}

struct Common {
  std::uint64_t seed = 0;
  std::optional<std::string> manifest;
  std::string config;
  unsigned jobs = 0;
};

struct SolverOpts {
  std::string lambda = "auto";
  double gamma = 0.0;
  double r1 = 1.0;
  double r2 = 1.0;
  double eps = 1e-7;
  int max_iter = 1000;
  double cg_tol = 1e-10;
  int cg_max_iter = 500;
  std::string init = "random";
};

struct GraphOpts {
  double sigma2 = 0.05;
  std::optional<Index> knn;
  bool no_standardize = false;
  bool tv = false;
  double tv_weight = 0.1;
  int tv_iters = 100;
};

struct ImageOpts {
  std::optional<Index> height;
  std::optional<Index> width;
};

void add_common(CLI::App* app, Recorder& rec, Common& c) {
  option(app, rec, "seed", c.seed, "Seed for every random choice of the run");
  app->add_option("--manifest", c.manifest, "Manifest path (default: <output>.manifest.json)");
  app->add_option("--config", c.config, "key=value file; command-line flags take precedence");
  app->add_option("--jobs", c.jobs, "Worker threads (0 = hardware concurrency)")
      ->envname("RPCAG_JOBS");
}

void add_solver(CLI::App* app, Recorder& rec, SolverOpts& s, bool with_gamma) {
  option(app, rec, "lambda", s.lambda, "Sparsity weight or 'auto' for 1/sqrt(max(p, n))");
  if (with_gamma) option(app, rec, "gamma", s.gamma, "Graph regularization weight");
  option(app, rec, "r1", s.r1, "ADMM penalty on X = L + S");
  option(app, rec, "r2", s.r2, "ADMM penalty on W = L");
  option(app, rec, "eps", s.eps, "Relative change tolerance");
  option(app, rec, "max-iter", s.max_iter, "Iteration cap");
  option(app, rec, "cg-tol", s.cg_tol, "CG relative residual tolerance");
  option(app, rec, "cg-max-iter", s.cg_max_iter, "CG iteration cap");
  option(app, rec, "init", s.init, "Initialization: random or zero")
      ->check(CLI::IsMember({"random", "zero"}));
}

void add_graph(CLI::App* app, Recorder& rec, GraphOpts& g) {
  option(app, rec, "sigma2", g.sigma2, "Heat-kernel bandwidth");
  option(app, rec, "knn", g.knn, "Keep the knn strongest neighbors per sample");
  flag(app, rec, "no-standardize", g.no_standardize, "Skip feature standardization");
  flag(app, rec, "tv", g.tv, "TV-denoise images before computing distances");
  option(app, rec, "tv-weight", g.tv_weight, "TV regularization weight");
  option(app, rec, "tv-iters", g.tv_iters, "TV iterations");
}

void add_image(CLI::App* app, Recorder& rec, ImageOpts& im) {
  option(app, rec, "height", im.height, "Image height of each column");
  option(app, rec, "width", im.width, "Image width of each column");
}

GraphConfig graph_config(const GraphOpts& g) {
  GraphConfig cfg;
  cfg.sigma2 = g.sigma2;
  cfg.knn = g.knn;
  cfg.standardize = !g.no_standardize;
  cfg.tv = g.tv;
  cfg.tv_options = {g.tv_weight, g.tv_iters};
  return cfg;
}

double resolve_lambda(const std::string& text, Index p, Index n) {
  if (text == "auto") return default_lambda(p, n);
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || r.ec != std::errc{} || r.ptr != text.data() + text.size())
    throw ConfigError("--lambda must be 'auto' or a number, got '" + text + "'");
  return v;
}

SolverConfig solver_config(const SolverOpts& s, double lambda, std::uint64_t seed) {
  SolverConfig cfg;
  cfg.lambda = lambda;
  cfg.gamma = s.gamma;
  cfg.r1 = s.r1;
  cfg.r2 = s.r2;
  cfg.eps = s.eps;
  cfg.max_iter = s.max_iter;
  cfg.cg_tol = s.cg_tol;
  cfg.cg_max_iter = s.cg_max_iter;
  cfg.seed = seed;
  cfg.init = s.init == "zero" ? InitScheme::zero : InitScheme::random;
  return cfg;
}

DataMatrix load_data(const std::string& path, const ImageOpts& im) {
  DataMatrix x = load_matrix(path);
  if (im.height.has_value() != im.width.has_value())
    throw ConfigError("--height and --width must be given together");
  if (im.height) return x.with_image_shape({*im.height, *im.width});
  return x;
}

std::optional<ObservationMask> load_optional_mask(const std::optional<std::string>& path,
                                                  const DataMatrix& x) {
  if (!path) return std::nullopt;
  ObservationMask m = load_mask(*path);
  if (m.rows() != x.features() || m.cols() != x.samples())
    throw DataError("mask shape does not match the data matrix");
  return m;
}

GraphLaplacian load_laplacian(const std::string& path) {
  const Matrix phi = load_matrix(path).values();
  if (phi.rows() != phi.cols()) throw GraphError("Laplacian file is not square");
  if ((phi - phi.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, phi.cwiseAbs().maxCoeff()))
    throw GraphError("Laplacian file is not symmetric");
  return GraphLaplacian(phi, Vector::Ones(phi.rows()));
}

std::vector<int> load_labels(const std::string& path) {
  const Matrix m = load_matrix(path).values();
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(m.size()));
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) {
      const double v = m(i, j);
      if (v != std::floor(v) || std::abs(v) > 1e9) throw DataError("labels must be integers");
      labels.push_back(static_cast<int>(v));
    }
  if (m.rows() > 1 && m.cols() > 1) throw DataError("labels must be a single row or column");
  return labels;
}

void save_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  for (int l : labels) f << l << '\n';
  if (!f) throw FormatError("failed writing '" + path + "'");
}

void save_history(const std::string& path, const std::vector<IterationRecord>& history) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f << "iter,nuc,l1,tr,res_primal1,res_primal2\n";
  for (const auto& h : history)
    f << h.iter << ',' << to_text(h.nuclear) << ',' << to_text(h.l1) << ',' << to_text(h.trace)
      << ',' << to_text(h.res_primal1) << ',' << to_text(h.res_primal2) << '\n';
  if (!f) throw FormatError("failed writing '" + path + "'");
}

json conventions() {
  return {
      {"omega_min", "minimum off-diagonal distance; the zero diagonal is excluded"},
      {"l_threshold", "svt threshold 1/(r1+r2)"},
      {"stopping", "stop when all five relative squared changes are <= eps"},
      {"objective_trace_term", "gamma*tr(W Phi W^T) on the split variable W"},
      {"converged", "stopped by eps and both primal residuals within feasibility tolerance 1e-6"},
      {"reconstruction_error", "log10(||L_true-L||_F/||L_true||_F), clamped at -16"},
      {"standardization", "sample standard deviation (n-1), zero-variance rows only centered"},
      {"empty_overlap_distance", "largest finite distance"},
      {"pixel_layout", "column-major r + c*height"},
      {"raw_f64", "u64 LE rows, u64 LE cols, then f64 LE column-major"},
  };
}

json summary_of(const SolverResult& r) {
  return {{"iterations", r.iterations},
          {"converged", r.converged},
          {"stopped_by_tolerance", r.stopped_by_tolerance},
          {"principal_rank", r.principal_rank}};
}

// One subcommand with its own option storage.
struct Command {
  CLI::App* app = nullptr;
  Recorder rec;
  Common common;
  // Executes the command; fills outputs/summary/resolved and returns the
  // primary output path used for the default manifest location.
  std::function<std::string(json& manifest, std::ostream& out)> run;
};

void write_manifest(const Command& cmd, const std::string& name, const std::string& primary,
                    json extra, const std::string& start, unsigned jobs) {
  json m;
  m["command"] = name;
  m["parameters"] = cmd.rec.dump();
  m["seed"] = cmd.common.seed;
  m["library_version"] = kVersion;
  m["timestamps"] = {{"start", start}, {"end", utc_now()}};
  m["conventions"] = conventions();
  m["jobs"] = jobs;
  for (auto& [k, v] : extra.items()) m[k] = v;
  const std::string path = cmd.common.manifest ? *cmd.common.manifest : primary + ".manifest.json";
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f << m.dump(2) << '\n';
  if (!f) throw FormatError("failed writing '" + path + "'");
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Appends "--key=value" for config entries not already on the command line.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  std::ifstream f(*path);
  if (!f) throw ConfigError("cannot read config file '" + *path + "'");
  std::string line;
  int lineno = 0;
  std::vector<std::string> extra;
  while (std::getline(f, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(*path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    if (key.empty() || key == "config")
      throw ConfigError(*path + ":" + std::to_string(lineno) + ": invalid key");
    const std::string flag_name = "--" + key;
    bool given = false;
    for (std::size_t i = 1; i < args.size(); ++i)
      if (args[i] == flag_name || args[i].rfind(flag_name + "=", 0) == 0) given = true;
    if (!given) extra.push_back(flag_name + "=" + value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

struct Registry {
  CLI::App app{"Graph-regularized robust PCA solver and experiment harness", "rpcag"};
  std::vector<std::unique_ptr<Command>> commands;

  Command& make(const std::string& name, const std::string& help) {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    commands.push_back(std::move(cmd));
    return *commands.back();
  }
};

void register_solve(Registry& reg) {
  struct State {
    std::string input, out_l, out_s;
    std::optional<std::string> mask, graph, history;
    ImageOpts image;
    SolverOpts solver;
    GraphOpts graph_opts;
  };
  auto st = std::make_shared<State>();
  Command& c = reg.make("solve", "Decompose X into low-rank L and sparse S");
  option(c.app, c.rec, "input", st->input, "Data matrix (csv or raw-f64)")->required();
  option(c.app, c.rec, "mask", st->mask, "Observation mask for masked graph distances");
  option(c.app, c.rec, "graph", st->graph, "Precomputed Laplacian (n x n)");
  add_image(c.app, c.rec, st->image);
  add_solver(c.app, c.rec, st->solver, true);
  add_graph(c.app, c.rec, st->graph_opts);
  option(c.app, c.rec, "out-l", st->out_l, "Low-rank output")->required();
  option(c.app, c.rec, "out-s", st->out_s, "Sparse output")->required();
  option(c.app, c.rec, "history", st->history, "Per-iteration history CSV");
  add_common(c.app, c.rec, c.common);

  c.run = [st, &c](json& manifest, std::ostream& out) {
    const DataMatrix x = load_data(st->input, st->image);
    const auto mask = load_optional_mask(st->mask, x);
    const double lambda = resolve_lambda(st->solver.lambda, x.features(), x.samples());
    const SolverConfig cfg = solver_config(st->solver, lambda, c.common.seed);
    std::optional<GraphLaplacian> phi;
    if (cfg.gamma > 0.0)
      phi = st->graph ? load_laplacian(*st->graph) : build_graph(x, mask, graph_config(st->graph_opts));
    const SolverResult res = solve(x, phi ? &*phi : nullptr, cfg);
    save_matrix(st->out_l, res.L);
    save_matrix(st->out_s, res.S);
    manifest["outputs"] = {{"L", st->out_l}, {"S", st->out_s}};
    if (st->history) {
      save_history(*st->history, res.history);
      manifest["outputs"]["history"] = *st->history;
    }
    manifest["resolved"] = {{"lambda", lambda}};
    manifest["summary"] = summary_of(res);
    out << "iterations=" << res.iterations << " converged=" << (res.converged ? "true" : "false")
        << " rank=" << res.principal_rank << " lambda=" << to_text(lambda) << '\n';
    return st->out_l;
  };
}

struct InstanceOpts {
  Index n = 100;
  double rank_frac = 0.1;
  double rho = 0.1;
  std::string scheme = "random";
  bool clustered = false;
  int clusters = 3;
  double separation = 1.0;
  double spread = 0.05;
};

void add_instance(CLI::App* app, Recorder& rec, InstanceOpts& o, bool with_shape_axes) {
  option(app, rec, "n", o.n, "Matrix side length");
  if (with_shape_axes) {
    option(app, rec, "rank-frac", o.rank_frac, "Rank as a fraction of n");
    option(app, rec, "rho", o.rho, "Corruption probability per entry");
  }
  option(app, rec, "scheme", o.scheme, "Corruption signs: random or coherent")
      ->check(CLI::IsMember({"random", "coherent"}));
  flag(app, rec, "clustered", o.clustered, "Cluster-structured low-rank factor");
  option(app, rec, "clusters", o.clusters, "Cluster count for --clustered");
  option(app, rec, "separation", o.separation, "Center scale for --clustered");
  option(app, rec, "spread", o.spread, "Within-cluster variance relative to the center scale");
}

void register_synth(Registry& reg) {
  struct State {
    InstanceOpts inst;
    std::optional<Index> rank;
    std::string out;
    std::optional<std::string> out_l, out_s, labels;
  };
  auto st = std::make_shared<State>();
  Command& c = reg.make("synth", "Generate a synthetic low-rank plus sparse instance");
  add_instance(c.app, c.rec, st->inst, true);
  option(c.app, c.rec, "rank", st->rank, "Absolute rank (overrides --rank-frac)");
  option(c.app, c.rec, "out", st->out, "Observed matrix X")->required();
  option(c.app, c.rec, "out-l", st->out_l, "Ground-truth low-rank matrix");
  option(c.app, c.rec, "out-s", st->out_s, "Ground-truth sparse matrix");
  option(c.app, c.rec, "labels", st->labels, "Cluster labels (with --clustered)");
  add_common(c.app, c.rec, c.common);

  c.run = [st, &c](json& manifest, std::ostream& out) {
    const InstanceOpts& o = st->inst;
    const Index rank =
        st->rank ? *st->rank : std::max<Index>(1, static_cast<Index>(std::llround(o.rank_frac * o.n)));
    const SignScheme scheme = parse_sign_scheme(o.scheme);
    const SyntheticInstance inst =
        o.clustered ? generate_clustered(o.n, rank, o.rho, scheme,
                                         ClusterShape{o.clusters, o.separation, o.spread}, c.common.seed)
                    : generate(o.n, rank, o.rho, scheme, c.common.seed);
    save_matrix(st->out, inst.X.values());
    manifest["outputs"] = {{"X", st->out}};
    if (st->out_l) {
      save_matrix(*st->out_l, inst.L_true);
      manifest["outputs"]["L"] = *st->out_l;
    }
    if (st->out_s) {
      save_matrix(*st->out_s, inst.S_true);
      manifest["outputs"]["S"] = *st->out_s;
    }
    if (st->labels) {
      if (inst.labels.empty()) throw ConfigError("--labels requires --clustered");
      save_labels(*st->labels, inst.labels);
      manifest["outputs"]["labels"] = *st->labels;
    }
    const Index support = (inst.S_true.array() != 0.0).count();
    manifest["resolved"] = {{"rank", rank}};
    manifest["summary"] = {{"corrupted_entries", support}};
    out << "n=" << o.n << " rank=" << rank << " corrupted=" << support << '\n';
    return st->out;
  };
}

void register_sweep(Registry& reg) {
  struct State {
    std::string axes;
    InstanceOpts inst;
    double lambda_mult = 1.0;
    int seeds = 3;
    SolverOpts solver;
    GraphOpts graph_opts;
    std::string out;
  };
  auto st = std::make_shared<State>();
  Command& c = reg.make("sweep", "Phase diagram of reconstruction error over two axes");
  option(c.app, c.rec, "axes", st->axes,
         "Two axes among rank, rho, lambda, lambda-mult, gamma, e.g. rank:0.02:0.3:8,rho:0.06:0.3:8")
      ->required();
  add_instance(c.app, c.rec, st->inst, true);
  option(c.app, c.rec, "lambda-mult", st->lambda_mult, "Multiple of the default lambda");
  option(c.app, c.rec, "seeds", st->seeds, "Instances per cell");
  add_solver(c.app, c.rec, st->solver, true);
  add_graph(c.app, c.rec, st->graph_opts);
  option(c.app, c.rec, "out", st->out, "Diagram CSV")->required();
  add_common(c.app, c.rec, c.common);

  c.run = [st, &c](json& manifest, std::ostream& out) {
    const auto [a1, a2] = parse_axes(st->axes);
    SweepFixed fixed;
    fixed.n = st->inst.n;
    fixed.rank_frac = st->inst.rank_frac;
    fixed.rho = st->inst.rho;
    fixed.scheme = parse_sign_scheme(st->inst.scheme);
    if (st->inst.clustered)
      fixed.clusters = ClusterShape{st->inst.clusters, st->inst.separation, st->inst.spread};
    if (st->solver.lambda != "auto") fixed.lambda = resolve_lambda(st->solver.lambda, 1, 1);
    fixed.lambda_mult = st->lambda_mult;
    fixed.gamma = st->solver.gamma;
    fixed.solver = solver_config(st->solver, 1.0, c.common.seed);
    fixed.graph = graph_config(st->graph_opts);
    const unsigned jobs = c.common.jobs ? c.common.jobs : default_jobs();
    const PhaseDiagram d = phase_sweep(a1, a2, fixed, c.common.seed, st->seeds, jobs);

    std::ofstream f(st->out);
    if (!f) throw FormatError("cannot open '" + st->out + "' for writing");
    f << "axis1,axis2,mean_log_err,failed_count\n";
    int failed = 0;
    for (std::size_t i = 0; i < a1.values.size(); ++i)
      for (std::size_t j = 0; j < a2.values.size(); ++j) {
        const PhaseCell& cell = d.cell(i, j);
        failed += cell.failed;
        f << to_text(a1.values[i]) << ',' << to_text(a2.values[j]) << ','
          << (std::isnan(cell.mean_log_err) ? std::string("nan") : to_text(cell.mean_log_err))
          << ',' << cell.failed << '\n';
      }
    if (!f) throw FormatError("failed writing '" + st->out + "'");
    manifest["outputs"] = {{"diagram", st->out}};
    manifest["resolved"] = {{"axis1", to_string(a1.param)}, {"axis2", to_string(a2.param)}};
    manifest["summary"] = {{"cells", d.cells.size()}, {"failed_runs", failed}};
    out << "cells=" << d.cells.size() << " failed_runs=" << failed << '\n';
    return st->out;
  };
}

std::vector<double> parse_gamma_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    double v = 0.0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || r.ec != std::errc{} || r.ptr != tok.data() + tok.size())
      throw ConfigError("invalid gamma '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("gamma grid is empty");
  return out;
}

void register_cluster(Registry& reg) {
  struct State {
    std::string input, labels, out;
    std::optional<std::string> mask, out_labels;
    std::string gammas = "0,0.1,1,10";
    int k = 2;
    int runs = 10;
    std::optional<Index> dim;
    bool scale_by_sigma = false;
    ImageOpts image;
    SolverOpts solver;
    GraphOpts graph_opts;
  };
  auto st = std::make_shared<State>();
  Command& c = reg.make("cluster", "Clustering error of k-means on the principal components of L");
  option(c.app, c.rec, "input", st->input, "Data matrix")->required();
  option(c.app, c.rec, "labels", st->labels, "True labels, one per sample")->required();
  option(c.app, c.rec, "mask", st->mask, "Observation mask");
  option(c.app, c.rec, "gamma", st->gammas, "Comma-separated gamma grid; the lowest error wins");
  option(c.app, c.rec, "k", st->k, "Cluster count");
  option(c.app, c.rec, "runs", st->runs, "k-means restarts");
  option(c.app, c.rec, "dim", st->dim, "Embedding dimension (default: numerical rank of L)");
  flag(c.app, c.rec, "scale-by-sigma", st->scale_by_sigma, "Weight components by singular value");
  add_image(c.app, c.rec, st->image);
  add_solver(c.app, c.rec, st->solver, false);
  add_graph(c.app, c.rec, st->graph_opts);
  option(c.app, c.rec, "out", st->out, "JSON report")->required();
  option(c.app, c.rec, "out-labels", st->out_labels, "Predicted labels of the selected gamma");
  add_common(c.app, c.rec, c.common);

  c.run = [st, &c](json& manifest, std::ostream& out) {
    const DataMatrix x = load_data(st->input, st->image);
    const std::vector<int> truth = load_labels(st->labels);
    const double lambda = resolve_lambda(st->solver.lambda, x.features(), x.samples());
    const unsigned jobs = c.common.jobs ? c.common.jobs : default_jobs();

    ClusterPipelineConfig cfg;
    cfg.solver = solver_config(st->solver, lambda, c.common.seed);
    cfg.graph = graph_config(st->graph_opts);
    cfg.gammas = parse_gamma_list(st->gammas);
    cfg.k = st->k;
    cfg.runs = st->runs;
    cfg.seed = c.common.seed;
    cfg.dim = st->dim;
    cfg.scale_by_sigma = st->scale_by_sigma;
    cfg.mask = load_optional_mask(st->mask, x);
    const ClusterPipelineResult res = cluster_pipeline(x, truth, cfg);
    const GammaTrial& best = res.best_trial();

    const ClusteringReport raw = kmeans(x.values(), st->k, st->runs, c.common.seed, jobs);
    const double raw_error = clustering_error(raw.labels, truth);

    json trials = json::array();
    for (const auto& t : res.trials)
      trials.push_back({{"gamma", t.gamma},
                        {"error_percent", t.error_percent},
                        {"iterations", t.iterations},
                        {"rank", t.rank},
                        {"converged", t.converged}});
    json report = {{"error_percent", best.error_percent},
                   {"gamma", best.gamma},
                   {"iterations", best.iterations},
                   {"rank", best.rank},
                   {"converged", best.converged},
                   {"kmeans_runs", best.report.kmeans_runs},
                   {"best_run_inertia", best.report.best_run_inertia},
                   {"raw_kmeans_error_percent", raw_error},
                   {"params", {{"lambda", lambda}, {"k", st->k}, {"runs", st->runs}, {"seed", c.common.seed}}},
                   {"trials", trials}};
    std::ofstream f(st->out);
    if (!f) throw FormatError("cannot open '" + st->out + "' for writing");
    f << report.dump(2) << '\n';
    if (!f) throw FormatError("failed writing '" + st->out + "'");
    manifest["outputs"] = {{"report", st->out}};
    if (st->out_labels) {
      save_labels(*st->out_labels, best.report.labels);
      manifest["outputs"]["labels"] = *st->out_labels;
    }
    manifest["resolved"] = {{"lambda", lambda}};
    manifest["summary"] = {{"error_percent", best.error_percent}, {"gamma", best.gamma}};
    out << "error_percent=" << to_text(best.error_percent) << " gamma=" << to_text(best.gamma)
        << " raw_kmeans_error_percent=" << to_text(raw_error) << '\n';
    return st->out;
  };
}

void register_background(Registry& reg) {
  struct State {
    std::string frames, out_l, out_s;
    std::optional<std::string> history;
    ImageOpts image;
    SolverOpts solver;
    GraphOpts graph_opts;
  };
  auto st = std::make_shared<State>();
  st->solver.gamma = 10.0;
  Command& c = reg.make("background", "Split a video (columns are frames) into background and foreground");
  option(c.app, c.rec, "frames", st->frames, "Frame matrix, one vectorized frame per column")->required();
  add_image(c.app, c.rec, st->image);
  add_solver(c.app, c.rec, st->solver, true);
  add_graph(c.app, c.rec, st->graph_opts);
  option(c.app, c.rec, "out-l", st->out_l, "Background (low-rank) output")->required();
  option(c.app, c.rec, "out-s", st->out_s, "Foreground (sparse) output")->required();
  option(c.app, c.rec, "history", st->history, "Per-iteration history CSV");
  add_common(c.app, c.rec, c.common);

  c.run = [st, &c](json& manifest, std::ostream& out) {
    const DataMatrix frames = load_data(st->frames, st->image);
    const double lambda = resolve_lambda(st->solver.lambda, frames.features(), frames.samples());
    const SolverConfig cfg = solver_config(st->solver, lambda, c.common.seed);
    const BackgroundResult res = background_extract(frames, cfg, graph_config(st->graph_opts));
    save_matrix(st->out_l, res.background);
    save_matrix(st->out_s, res.foreground);
    manifest["outputs"] = {{"L", st->out_l}, {"S", st->out_s}};
    if (st->history) {
      save_history(*st->history, res.solve.history);
      manifest["outputs"]["history"] = *st->history;
    }
    const double ratio = res.foreground.norm() / frames.values().norm();
    manifest["resolved"] = {{"lambda", lambda}};
    manifest["summary"] = summary_of(res.solve);
    manifest["summary"]["foreground_ratio"] = ratio;
    out << "iterations=" << res.solve.iterations
        << " converged=" << (res.solve.converged ? "true" : "false")
        << " foreground_ratio=" << to_text(ratio) << '\n';
    return st->out_l;
  };
}

void register_graph(Registry& reg) {
  struct State {
    std::string input, out;
    std::optional<std::string> mask, adjacency;
    ImageOpts image;
    GraphOpts graph_opts;
  };
  auto st = std::make_shared<State>();
  Command& c = reg.make("graph", "Build the normalized sample-graph Laplacian");
  option(c.app, c.rec, "input", st->input, "Data matrix")->required();
  option(c.app, c.rec, "mask", st->mask, "Observation mask");
  add_image(c.app, c.rec, st->image);
  add_graph(c.app, c.rec, st->graph_opts);
  option(c.app, c.rec, "out", st->out, "Laplacian output (n x n)")->required();
  option(c.app, c.rec, "adjacency", st->adjacency, "Adjacency output (n x n)");
  add_common(c.app, c.rec, c.common);

  c.run = [st](json& manifest, std::ostream& out) {
    const DataMatrix x = load_data(st->input, st->image);
    const auto mask = load_optional_mask(st->mask, x);
    const Adjacency a = build_adjacency(x, mask, graph_config(st->graph_opts));
    const GraphLaplacian phi = normalized_laplacian(a);
    save_matrix(st->out, phi.phi());
    manifest["outputs"] = {{"laplacian", st->out}};
    if (st->adjacency) {
      save_matrix(*st->adjacency, a.weights());
      manifest["outputs"]["adjacency"] = *st->adjacency;
    }
    manifest["summary"] = {{"samples", phi.size()}, {"min_degree", phi.degrees().minCoeff()}};
    out << "samples=" << phi.size() << " min_degree=" << to_text(phi.degrees().minCoeff()) << '\n';
    return st->out;
  };
}

}  // namespace

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Registry reg;
  reg.app.require_subcommand(1);
  reg.app.set_version_flag("--version", kVersion);
  register_solve(reg);
  register_synth(reg);
  register_sweep(reg);
  register_cluster(reg);
  register_background(reg);
  register_graph(reg);

  std::vector<std::string> args;
  try {
    args = merge_config(raw_args);
  } catch (const Error& e) {
    err << e.kind() << ": " << e.what() << '\n';
    return 2;
  }

  try {
    // CLI11 consumes arguments from the back.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    reg.app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = reg.app.exit(e, out, err);
    if (code == 0) return 0;
    if (raw_args.empty() || dynamic_cast<const CLI::ExtrasError*>(&e) ||
        dynamic_cast<const CLI::RequiredError*>(&e))
      err << reg.app.help();
    return 2;
  }

  for (auto& cmd : reg.commands) {
    if (!cmd->app->parsed()) continue;
    const std::string start = utc_now();
    const unsigned jobs = cmd->common.jobs ? cmd->common.jobs : default_jobs();
    try {
      json extra = json::object();
      const std::string primary = cmd->run(extra, out);
      write_manifest(*cmd, cmd->app->get_name(), primary, std::move(extra), start, jobs);
    } catch (const Error& e) {
      err << e.kind() << ": " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      err << "Error: " << e.what() << '\n';
      return 1;
    }
    return 0;
  }
  return 2;
}

std::vector<std::string> argv_from_manifest(const json& manifest) {
  std::vector<std::string> args{manifest.at("command").get<std::string>()};
  for (const auto& [key, value] : manifest.at("parameters").items())
    args.push_back("--" + key + "=" + value.get<std::string>());
  return args;
}

}  // namespace rpcag::cli
