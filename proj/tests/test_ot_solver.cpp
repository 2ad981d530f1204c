#include <doctest.h>

#include <cmath>

#include "sqsn/oracle.hpp"
#include "sqsn/ot_solver.hpp"
#include "sqsn/smoothing.hpp"
#include "test_support.hpp"

using namespace sqsn;
using namespace sqsn::testing;

namespace {

Eigen::MatrixXd dense_normal(const OtProblem& p, const Eigen::VectorXd& v, double sigma,
                             double lambda) {
  const Eigen::MatrixXd A = dense_A(p);
  Eigen::MatrixXd N = sigma * A * v.asDiagonal() * A.transpose();
  N.diagonal().array() += lambda;
  return N;
}

// θ with a random sparsity pattern; a fraction of entries exactly zero.
Eigen::VectorXd sparse_theta(Rng& rng, int size, double zero_fraction) {
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = uniform(rng, 0, 1) < zero_fraction ? 0.0 : uniform(rng, 0.01, 5);
  return v;
}

SmoothingIterate random_iterate(Rng& rng, const OtProblem& p, const SolverConfig& cfg) {
  const double eps = std::pow(10.0, uniform(rng, -6, 0));
  return make_iterate(p, SmoothingParams::from(cfg, p), eps, random_vector(rng, p.primal_dim(), -0.2, 0.5),
                      random_vector(rng, p.dual_dim(), -0.5, 0.5));
}

}  // namespace

TEST_CASE("normal matrix: 2x2 block example equals dense A Theta A^T") {
  const auto p = OtProblem::create(Eigen::Matrix2d::Ones(), Eigen::Vector2d(0.5, 0.5),
                                   Eigen::Vector2d(0.5, 0.5), {.drop_last_row = false});
  const Eigen::Vector4d theta(1, 2, 3, 4);
  const auto sys = make_normal_system_ot(p, theta, 1.0, 0.0);
  Eigen::Matrix4d expected;
  expected << 4, 0, 1, 3,
              0, 6, 2, 4,
              1, 2, 3, 0,
              3, 4, 0, 7;
  const Eigen::MatrixXd got = normal_matrix(sys).to_dense();
  CHECK((got - expected).norm() == 0.0);
  CHECK((got - dense_normal(p, theta, 1.0, 0.0)).norm() == 0.0);
}

TEST_CASE("normal matrix: v = 0 gives lambda I") {
  Rng rng(1);
  const auto p = random_ot(rng, 3, 4);
  const auto sys = make_normal_system_ot(p, Eigen::VectorXd::Zero(12), 2.0, 0.3);
  CHECK((normal_matrix(sys).to_dense() - 0.3 * Eigen::MatrixXd::Identity(6, 6)).norm() == 0.0);
  CHECK(sys.nnz() == 0);
  const Eigen::VectorXd rhs = random_vector(rng, 6);
  const auto res = solve_normal_by_components(sys, rhs);
  CHECK((res.dy - rhs / 0.3).norm() < 1e-15);
}

TEST_CASE("normal matrix: block form equals dense A Theta A^T on random theta") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    OtOptions o;
    o.drop_last_row = trial % 2 == 0;
    const auto p = random_ot(rng, uniform_int(rng, 1, 8), uniform_int(rng, 1, 8), o);
    const Eigen::VectorXd theta = sparse_theta(rng, p.primal_dim(), 0.3);
    const double sigma = uniform(rng, 0.5, 10), lambda = uniform(rng, 1e-6, 1);
    const auto sys = make_normal_system_ot(p, theta, sigma, lambda);
    const Eigen::MatrixXd ref = dense_normal(p, theta, sigma, lambda);
    CHECK((normal_matrix(sys).to_dense() - ref).cwiseAbs().maxCoeff() <= 1e-12 * ref.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("component solve equals monolithic solve") {
  Rng rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    OtOptions o;
    o.drop_last_row = trial % 3 != 0;
    const int m = uniform_int(rng, 1, 9), n = uniform_int(rng, 1, 9);
    const auto p = random_ot(rng, m, n, o);
    const double zero_fraction = trial < 20 ? 0.85 : (trial < 40 ? 0.5 : 0.0);
    const Eigen::VectorXd theta = sparse_theta(rng, p.primal_dim(), zero_fraction);
    const double sigma = uniform(rng, 0.5, 1e3);
    const double lambda = std::pow(10.0, uniform(rng, trial % 2 == 0 ? -10 : -4, 0));
    const auto sys = make_normal_system_ot(p, theta, sigma, lambda);
    const Eigen::MatrixXd N = dense_normal(p, theta, sigma, lambda);
    const Eigen::VectorXd rhs = random_vector(rng, p.dual_dim());
    const auto res = solve_normal_by_components(sys, rhs);
    // Backward-stable residual at any conditioning; forward agreement with a
    // dense solve where the system is reasonably conditioned.
    const double scale = N.norm() * res.dy.norm() + rhs.norm();
    CHECK((N * res.dy - rhs).norm() <= 1e-12 * scale);
    if (lambda > 1e-4) {
      const Eigen::VectorXd mono = N.ldlt().solve(rhs);
      CHECK((res.dy - mono).norm() <= 1e-9 * (1 + mono.norm()));
    }
  }
}

TEST_CASE("component solve: disjoint blocks are independent factorizations") {
  const int m = 4, n = 5;
  Eigen::MatrixXd pattern = Eigen::MatrixXd::Zero(m, n);
  pattern.topLeftCorner(2, 2).setConstant(1.5);
  pattern.bottomRightCorner(2, 3).setConstant(0.7);
  const auto p = OtProblem::create(Eigen::MatrixXd::Ones(m, n), Eigen::VectorXd::Constant(m, 0.25),
                                   Eigen::VectorXd::Constant(n, 0.2));
  const Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(pattern.data(), m * n);
  const auto sys = make_normal_system_ot(p, theta, 3.0, 1e-3);
  CHECK(sys.components.count == 2);
  Rng rng(4);
  const Eigen::VectorXd rhs = random_vector(rng, p.dual_dim());
  const auto res = solve_normal_by_components(sys, rhs);
  CHECK(res.path == LinearPath::Components);
  const Eigen::VectorXd mono = dense_normal(p, theta, 3.0, 1e-3).llt().solve(rhs);
  CHECK((res.dy - mono).norm() <= 1e-9 * (1 + mono.norm()));
}

TEST_CASE("OtNormalSolver: pcg and direct agree") {
  Rng rng(5);
  const auto p = random_ot(rng, 12, 10);
  const Eigen::VectorXd theta = sparse_theta(rng, p.primal_dim(), 0.2);
  const Eigen::VectorXd rhs = random_vector(rng, p.dual_dim());
  OtNormalSolver direct(p, LinearSolverKind::Direct);
  OtNormalSolver iterative(p, LinearSolverKind::Pcg);
  const auto a = direct.solve(theta, 5.0, 1e-2, rhs, 1e-12);
  const auto b = iterative.solve(theta, 5.0, 1e-2, rhs, 1e-12);
  CHECK(b.path == LinearPath::Pcg);
  CHECK(b.iterations > 0);
  CHECK((a.dy - b.dy).norm() <= 1e-8 * (1 + a.dy.norm()));
}

TEST_CASE("newton direction: fixed point of the eps update") {
  Rng rng(6);
  const auto p = random_ot(rng, 3, 3);
  SolverConfig cfg;
  const auto params = SmoothingParams::from(cfg, p);
  const auto it = make_iterate(p, params, cfg.eps0, random_vector(rng, 9), random_vector(rng, 5));
  OtNormalSolver solver(p, LinearSolverKind::Auto);
  const auto dir = newton_direction(p, params, cfg, it, 1.0, solver);
  CHECK(dir.d_eps == 0.0);
}

TEST_CASE("newton direction: decoupled case v2 = 0") {
  Rng rng(7);
  const auto p = random_ot(rng, 3, 4);
  SolverConfig cfg;
  const auto params = SmoothingParams::from(cfg, p);
  // Strongly negative w makes every v2 vanish.
  const Eigen::VectorXd x = random_vector(rng, 12, 0, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Constant(6, -50.0);
  const double eps = 0.2;
  const auto it = make_iterate(p, params, eps, x, y);
  REQUIRE((it.eval.w.array() <= 0).all());
  OtNormalSolver solver(p, LinearSolverKind::Auto);
  const double z = zeta(cfg, it.eval.norm());
  const auto dir = newton_direction(p, params, cfg, it, z, solver);
  const Eigen::VectorXd rp = -it.eval.primal_residual - cfg.kappa_p * dir.d_eps * y;
  const Eigen::VectorXd rc = -it.eval.comp_residual - cfg.kappa_c * dir.d_eps * x;
  const Eigen::VectorXd dx_expected = rc / (1 + cfg.kappa_c * eps);
  const Eigen::VectorXd dy_expected = (rp - apply_A(p, dx_expected)) / (cfg.kappa_p * eps);
  CHECK((dir.dx - dx_expected).norm() <= 1e-12 * (1 + dx_expected.norm()));
  CHECK((dir.dy - dy_expected).norm() <= 1e-12 * (1 + dy_expected.norm()));
}

TEST_CASE("newton direction satisfies the dense Jacobian system") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_ot(rng, uniform_int(rng, 1, 6), uniform_int(rng, 1, 6));
    SolverConfig cfg;
    const auto params = SmoothingParams::from(cfg, p);
    const auto it = random_iterate(rng, p, cfg);
    const double z = zeta(cfg, it.eval.norm());
    const auto dir = newton_direction_ot(p, cfg, it);
    const auto sys = dense_system(dense_A(p), p.cost_scaled, p.rhs_scaled, params.sigma,
                                  cfg.kappa_p, cfg.kappa_c, it.eps, it.x, it.y);
    Eigen::VectorXd delta(1 + p.primal_dim() + p.dual_dim());
    delta << dir.d_eps, dir.dx, dir.dy;
    Eigen::VectorXd rhs = -sys.ehat;
    rhs[0] += z * cfg.eps0;
    const double res = (sys.J * delta - rhs).norm();
    CHECK(res <= 1e-9 * (1 + rhs.norm()));
    const double structured = newton_residual(p, params, cfg, it, z, dir).norm();
    CHECK(structured <= 1e-9 * (1 + rhs.norm()));
  }
}

TEST_CASE("line search: zero direction fails, accepted steps decrease merit") {
  Rng rng(9);
  const auto p = random_ot(rng, 3, 3);
  SolverConfig cfg;
  const auto params = SmoothingParams::from(cfg, p);
  const auto it = random_iterate(rng, p, cfg);
  NewtonDirection zero;
  zero.dx = Eigen::VectorXd::Zero(9);
  zero.dy = Eigen::VectorXd::Zero(5);
  CHECK_FALSE(line_search(p, params, cfg, it, zero).accepted);

  const auto dir = newton_direction_ot(p, cfg, it);
  const auto ls = line_search(p, params, cfg, it, dir);
  REQUIRE(ls.accepted);
  CHECK(ls.next.eval.merit < it.eval.merit);
  CHECK(ls.next.eval.merit <= (1 - 2 * cfg.mu * (1 - cfg.delta()) * ls.step) * it.eval.merit);
}

TEST_CASE("solve_ot: trivial instances") {
  const auto one = OtProblem::create(Eigen::MatrixXd::Constant(1, 1, 5.0), Eigen::VectorXd::Ones(1),
                                     Eigen::VectorXd::Ones(1));
  const auto r1 = solve_ot(one);
  CHECK(r1.status == SolveStatus::Optimal);
  CHECK(r1.objective_primal == doctest::Approx(5.0).epsilon(1e-8));
  CHECK(r1.x[0] == doctest::Approx(1.0).epsilon(1e-8));

  Eigen::Matrix2d C;
  C << 0, 1, 1, 0;
  const auto two = OtProblem::create(C, Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.5, 0.5));
  const auto r2 = solve_ot(two);
  CHECK(r2.status == SolveStatus::Optimal);
  CHECK(std::abs(r2.objective_primal) <= 1e-8);
  CHECK(r2.x[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(r2.x[3] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(std::abs(r2.x[1]) <= 1e-8);
  CHECK(r2.plans.size() == 1);
}

TEST_CASE("solve_ot: matches the oracle and keeps the algorithm invariants") {
  Rng rng(10);
  SolverConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_ot(rng, uniform_int(rng, 2, 8), uniform_int(rng, 2, 8));
    const auto rep = solve_ot(p, cfg);
    REQUIRE(rep.status == SolveStatus::Optimal);
    const auto ref = ot_reference(p);
    CHECK(rel_diff(rep.objective_primal, ref.objective) <= 1e-6);
    CHECK(std::max({rep.eta_p, rep.eta_d, rep.eta_c, rep.eta_g}) <= cfg.tol);
    CHECK(rep.eta_d == 0.0);
    // Full residual including the dropped row.
    const Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(rep.x.data(), p.m, p.n);
    const double full = std::sqrt((X.rowwise().sum() - p.a).squaredNorm() +
                                  (X.colwise().sum().transpose() - p.b).squaredNorm());
    CHECK(full <= 2 * cfg.tol * (1 + p.rhs.norm()));
    double previous = INFINITY;
    for (const auto& rec : rep.log) {
      CHECK(rec.merit < previous);
      CHECK(rec.merit_next < rec.merit);
      CHECK(rec.eps > 0);
      CHECK(rec.eps >= rec.zeta * cfg.eps0 * (1 - 1e-12));
      CHECK(rec.merit_next <= (1 - 2 * cfg.mu * (1 - cfg.delta()) * rec.step) * rec.merit);
      previous = rec.merit;
    }
  }
}

TEST_CASE("solve_ot: keep-last-row and unscaled variants agree") {
  Rng rng(11);
  const Eigen::MatrixXd C = random_cost(rng, 4, 5);
  const Eigen::VectorXd a = random_distribution(rng, 4), b = random_distribution(rng, 5);
  const auto base = solve_ot(OtProblem::create(C, a, b));
  const auto full = solve_ot(OtProblem::create(C, a, b, {.drop_last_row = false}));
  const auto raw = solve_ot(OtProblem::create(C, a, b, {.drop_last_row = true, .scale = false}));
  REQUIRE(base.status == SolveStatus::Optimal);
  REQUIRE(full.status == SolveStatus::Optimal);
  REQUIRE(raw.status == SolveStatus::Optimal);
  CHECK(rel_diff(full.objective_primal, base.objective_primal) <= 1e-7);
  CHECK(rel_diff(raw.objective_primal, base.objective_primal) <= 1e-7);
}

TEST_CASE("solve_ot: max_iter yields MaxIter") {
  Rng rng(12);
  const auto p = random_ot(rng, 6, 6);
  SolverConfig cfg;
  cfg.max_iter = 1;
  const auto rep = solve_ot(p, cfg);
  CHECK(rep.status == SolveStatus::MaxIter);
  CHECK(rep.iterations == 1);
}

TEST_CASE("solve_ot: linear solver policies reach the same optimum") {
  Rng rng(13);
  const auto p = random_ot(rng, 7, 9);
  double objective[3];
  int k = 0;
  for (auto kind : {LinearSolverKind::Auto, LinearSolverKind::Direct, LinearSolverKind::Pcg}) {
    SolverConfig cfg;
    cfg.linear_solver = kind;
    const auto rep = solve_ot(p, cfg);
    REQUIRE(rep.status == SolveStatus::Optimal);
    objective[k++] = rep.objective_primal;
  }
  CHECK(rel_diff(objective[1], objective[0]) <= 1e-7);
  CHECK(rel_diff(objective[2], objective[0]) <= 1e-7);
}
