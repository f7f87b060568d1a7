#include <cmath>

#include "doctest.h"
#include "rpcag/errors.hpp"
#include "rpcag/prox.hpp"
#include "rpcag/synth.hpp"

using namespace rpcag;

TEST_CASE("generate builds X = L + S with the requested rank") {
  const SyntheticInstance inst = generate(60, 4, 0.1, SignScheme::random, 1);
  CHECK(inst.X.values() == inst.L_true + inst.S_true);
  CHECK(numerical_rank(singular_values(inst.L_true), 1e-10) == 4);
  CHECK(((inst.S_true.array() == 0) || (inst.S_true.array().abs() == 1)).all());
  CHECK(inst.labels.empty());

  const SyntheticInstance one = generate(30, 1, 0.2, SignScheme::random, 2);
  CHECK(numerical_rank(singular_values(one.L_true), 1e-10) == 1);
}

TEST_CASE("corruption count follows binomial statistics") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticInstance inst = generate(100, 5, 0.1, SignScheme::random, seed);
    total += static_cast<double>((inst.S_true.array() != 0).count());
  }
  const double mean = total / 20.0;
  CHECK(std::abs(mean - 1000.0) <= 3.0 * 30.0);
}

TEST_CASE("coherent corruption agrees in sign with L") {
  const SyntheticInstance inst = generate(50, 3, 0.2, SignScheme::coherent, 3);
  CHECK((inst.S_true.array() * inst.L_true.array() >= 0).all());
  CHECK((inst.S_true.array() != 0).count() > 0);
}

TEST_CASE("generate is reproducible and validates arguments") {
  const SyntheticInstance a = generate(40, 2, 0.1, SignScheme::random, 9);
  const SyntheticInstance b = generate(40, 2, 0.1, SignScheme::random, 9);
  CHECK(a.X.values() == b.X.values());
  CHECK(generate(40, 2, 0.1, SignScheme::random, 10).X.values() != a.X.values());
  CHECK_THROWS_AS(generate(10, 11, 0.1, SignScheme::random, 0), ConfigError);
  CHECK_THROWS_AS(generate(10, 0, 0.1, SignScheme::random, 0), ConfigError);
  CHECK_THROWS_AS(generate(10, 2, 0.0, SignScheme::random, 0), ConfigError);
  CHECK_THROWS_AS(generate(10, 2, 1.0, SignScheme::random, 0), ConfigError);
  CHECK(parse_sign_scheme("coherent") == SignScheme::coherent);
  CHECK_THROWS_AS(parse_sign_scheme("other"), ConfigError);
}

TEST_CASE("clustered generator") {
  const SyntheticInstance inst =
      generate_clustered(30, 5, 0.1, SignScheme::random, ClusterShape{3, 1.0, 0.0}, 4);
  CHECK(inst.labels.size() == 30);
  CHECK(inst.labels[4] == 1);
  // With zero spread every member equals its center, so L has rank <= k.
  CHECK(numerical_rank(singular_values(inst.L_true), 1e-10) == 3);
  CHECK((inst.L_true.col(0) - inst.L_true.col(3)).norm() == 0.0);
  CHECK_THROWS_AS(generate_clustered(30, 5, 0.1, SignScheme::random, ClusterShape{0, 1, 0.1}, 4),
                  ConfigError);
}

TEST_CASE("reconstruction error") {
  const Matrix l = Matrix::Ones(3, 3);
  CHECK(reconstruction_error(l, l) == -16.0);
  CHECK(reconstruction_error(Matrix::Zero(3, 3), l) == 0.0);
  CHECK(reconstruction_error(1.01 * l, l) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(reconstruction_error(l, Matrix::Zero(3, 3)), DataError);
  CHECK_THROWS_AS(reconstruction_error(Matrix::Ones(2, 3), l), DataError);
}

TEST_CASE("sweep axis parsing") {
  const SweepAxis a = SweepAxis::parse("rank:0.02:0.3:8");
  CHECK(a.param == SweepParam::rank_frac);
  REQUIRE(a.values.size() == 8);
  CHECK(a.values.front() == 0.02);
  CHECK(a.values.back() == doctest::Approx(0.3));
  const SweepAxis b = SweepAxis::parse("gamma=0/0.1/1");
  CHECK(b.param == SweepParam::gamma);
  CHECK(b.values == std::vector<double>{0.0, 0.1, 1.0});
  CHECK(SweepAxis::parse("rho:0.1").values == std::vector<double>{0.1});
  const auto [x, y] = parse_axes("lambda-mult:0.5:2:4,gamma:0:1:3");
  CHECK(x.param == SweepParam::lambda_mult);
  CHECK(y.values.size() == 3);
  CHECK_THROWS_AS(parse_axes("rho:0:1:2"), ConfigError);
  CHECK_THROWS_AS(parse_axes("rho:0:1:2,rho:0:1:2"), ConfigError);
  CHECK_THROWS_AS(SweepAxis::parse("rank:0:1:0"), ConfigError);
  CHECK_THROWS_AS(SweepAxis::parse("rank:a:1:2"), ConfigError);
  CHECK_THROWS_AS(SweepAxis::parse("bogus:0:1:2"), ConfigError);
  CHECK(affects_instance(SweepParam::rho));
  CHECK_FALSE(affects_instance(SweepParam::gamma));
}

TEST_CASE("single-cell sweep equals one solve") {
  SweepFixed fixed;
  fixed.n = 40;
  fixed.solver.max_iter = 200;
  const SweepAxis a = SweepAxis::parse("rank:0.05");
  const SweepAxis b = SweepAxis::parse("rho:0.05");
  const PhaseDiagram d = phase_sweep(a, b, fixed, 17, 1);
  REQUIRE(d.cells.size() == 1);
  const CellJob job = make_cell_job(a, 0, b, 0, fixed, 17, 0);
  CHECK(job.rank == 2);
  CHECK(job.lambda == default_lambda(40, 40));

  const SyntheticInstance inst = generate(40, 2, 0.05, SignScheme::random, job.seed);
  SolverConfig cfg = fixed.solver;
  cfg.lambda = job.lambda;
  cfg.seed = job.seed;
  const double expect = reconstruction_error(solve(inst.X, nullptr, cfg).L, inst.L_true);
  CHECK(d.cell(0, 0).mean_log_err == expect);
  CHECK(d.cell(0, 0).failed == 0);
}

TEST_CASE("gamma-zero column of a lambda-gamma sweep reproduces RPCA") {
  SweepFixed fixed;
  fixed.n = 30;
  fixed.rank_frac = 0.1;
  fixed.solver.max_iter = 100;
  const auto [lam, gam] = parse_axes("lambda-mult=0.5/1,gamma=0/0.5");
  const PhaseDiagram d = phase_sweep(lam, gam, fixed, 5, 2, 2);
  const PhaseDiagram rpca = phase_sweep(lam, SweepAxis::parse("gamma:0"), fixed, 5, 2, 1);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(d.cell(i, 0).errors == rpca.cell(i, 0).errors);
    CHECK(d.cell(i, 1).errors != d.cell(i, 0).errors);
  }
  // Instance seeds ignore lambda and gamma.
  CHECK(make_cell_job(lam, 0, gam, 0, fixed, 5, 1).seed == make_cell_job(lam, 1, gam, 1, fixed, 5, 1).seed);
  CHECK(make_cell_job(lam, 0, gam, 0, fixed, 5, 0).seed != make_cell_job(lam, 0, gam, 0, fixed, 5, 1).seed);
}

TEST_CASE("sweep failures are recorded, not fabricated") {
  SweepFixed fixed;
  fixed.n = 20;
  fixed.solver.max_iter = 20;
  const auto [r, rho] = parse_axes("rank=0.1/2.0,rho=0.1/1.5");
  const PhaseDiagram d = phase_sweep(r, rho, fixed, 1, 2, 3);
  CHECK(d.cell(0, 0).failed == 0);
  CHECK(std::isfinite(d.cell(0, 0).mean_log_err));
  CHECK(d.cell(0, 1).failed == 2);
  CHECK(std::isnan(d.cell(0, 1).mean_log_err));
  CHECK(d.cell(1, 0).failed == 2);
  CHECK_THROWS_AS(phase_sweep(r, rho, fixed, 1, 0), ConfigError);
}

TEST_CASE("parallel sweeps match serial ones") {
  SweepFixed fixed;
  fixed.n = 30;
  fixed.solver.max_iter = 50;
  const auto [a, b] = parse_axes("rank:0.05:0.2:2,rho:0.05:0.2:2");
  const PhaseDiagram s = phase_sweep(a, b, fixed, 3, 2, 1);
  const PhaseDiagram p = phase_sweep(a, b, fixed, 3, 2, 4);
  for (std::size_t c = 0; c < s.cells.size(); ++c) CHECK(s.cells[c].errors == p.cells[c].errors);
}
