#include <doctest.h>

#include <cmath>
#include <limits>

#include "sqsn/report_json.hpp"
#include "test_support.hpp"

using namespace sqsn;
using namespace sqsn::testing;

namespace {

CliReport sample_report(Rng& rng) {
  CliReport r;
  r.problem = "ot";
  r.status = SolveStatus::Optimal;
  r.iterations = 42;
  r.eta_p = uniform(rng, 0, 1e-8);
  r.eta_c = uniform(rng, 0, 1e-8);
  r.eta_g = 1.0 / 3.0;
  r.objective_primal = std::nextafter(0.1, 1.0);
  r.objective_dual = -2.5e-300;
  r.solve_seconds = 1.25;
  r.nnz_plan = 2047;
  r.config.tol = 1e-9;
  r.config.max_iter = 77;
  r.config.sigma = 12.5;
  r.config.linear_solver = LinearSolverKind::Pcg;
  r.sigma = 12.5;
  r.scale = false;
  r.drop_last_row = true;
  for (int k = 0; k < 5; ++k) {
    r.per_iteration.push_back({k, uniform(rng, 0, 1), std::pow(0.5, k) / 3.0, 1.0, k % 2});
  }
  r.extra["oracle_delta"] = 1.0e-12;
  return r;
}

}  // namespace

TEST_CASE("cli report round trips losslessly through JSON text") {
  Rng rng(1);
  const CliReport a = sample_report(rng);
  const CliReport b = cli_report_from_json(nlohmann::json::parse(dump_report(a)));
  CHECK(b.problem == a.problem);
  CHECK(b.status == a.status);
  CHECK(b.iterations == a.iterations);
  CHECK(b.eta_p == a.eta_p);
  CHECK(b.eta_c == a.eta_c);
  CHECK(b.eta_g == a.eta_g);
  CHECK(b.objective_primal == a.objective_primal);
  CHECK(b.objective_dual == a.objective_dual);
  CHECK(b.solve_seconds == a.solve_seconds);
  CHECK(b.nnz_plan == a.nnz_plan);
  CHECK(b.config.tol == a.config.tol);
  CHECK(b.config.max_iter == a.config.max_iter);
  CHECK(b.config.sigma == a.config.sigma);
  CHECK(b.config.linear_solver == a.config.linear_solver);
  CHECK(b.sigma == a.sigma);
  CHECK(b.scale == a.scale);
  CHECK(b.drop_last_row == a.drop_last_row);
  CHECK(b.per_iteration == a.per_iteration);
  CHECK(b.extra == a.extra);
  CHECK(dump_report(b) == dump_report(a));
}

TEST_CASE("non-finite values survive the round trip") {
  Rng rng(2);
  CliReport a = sample_report(rng);
  a.eta_g = std::numeric_limits<double>::infinity();
  a.objective_dual = std::numeric_limits<double>::quiet_NaN();
  const CliReport b = cli_report_from_json(nlohmann::json::parse(dump_report(a)));
  CHECK(std::isinf(b.eta_g));
  CHECK(std::isnan(b.objective_dual));
}

TEST_CASE("linear solver names") {
  for (auto k : {LinearSolverKind::Auto, LinearSolverKind::Direct, LinearSolverKind::Pcg}) {
    CHECK(parse_linear_solver(to_string(k)) == k);
  }
  CHECK_THROWS(parse_linear_solver("qr"));
}

TEST_CASE("make_cli_report copies the solve report") {
  SolveReport rep;
  rep.status = SolveStatus::MaxIter;
  rep.iterations = 3;
  rep.eta_p = 0.5;
  rep.sigma = 7;
  IterationRecord rec;
  rec.iter = 2;
  rec.merit = 0.25;
  rec.step = 0.5;
  rep.log.push_back(rec);
  SolverConfig cfg;
  const auto cli = make_cli_report("wb", rep, cfg);
  CHECK(cli.problem == "wb");
  CHECK(cli.status == SolveStatus::MaxIter);
  CHECK(cli.iterations == 3);
  CHECK(cli.eta_p == 0.5);
  CHECK(cli.sigma == 7);
  REQUIRE(cli.per_iteration.size() == 1);
  CHECK(cli.per_iteration[0].iter == 2);
  CHECK(cli.per_iteration[0].merit == 0.25);
  CHECK(cli.per_iteration[0].step == 0.5);
}
