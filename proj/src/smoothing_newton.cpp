#include "sqsn/smoothing_newton.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "sqsn/smoothing.hpp"

namespace sqsn {

template <class Problem>
SmoothingIterate make_iterate(const Problem& problem, const SmoothingParams& params, double eps,
                              Eigen::VectorXd x, Eigen::VectorXd y) {
  SmoothingIterate it;
  it.eps = eps;
  it.x = std::move(x);
  it.y = std::move(y);
  it.eval = evaluate_smoothed(problem, params, it.eps, it.x, it.y);
  return it;
}

namespace {

// Reduced solve for 𝓔̂′Δ = (t_eps; t_p; t_c): eliminates Δε and Δx and
// solves the normal equation for Δy.
struct ReducedSystem {
  HuberJacobians jac;
  Eigen::VectorXd g_inv;
  Eigen::VectorXd v;
};

template <class Problem>
void reduced_solve(const Problem& problem, const SmoothingParams& params,
                   const SmoothingIterate& iterate, const ReducedSystem& red, double t_eps,
                   const Eigen::VectorXd& t_p, const Eigen::VectorXd& t_c, double inner_tol,
                   NormalEquationSolver& solver, NewtonDirection& dir) {
  const Eigen::VectorXd& x = iterate.x;
  dir.d_eps = t_eps;
  // r_p = t_p − κ_p y Δε,  r_c = t_c − (κ_c x − V₁)Δε
  const Eigen::VectorXd r_p = t_p - (params.kappa_p * dir.d_eps) * iterate.y;
  const Eigen::Index size = x.size();
  Eigen::VectorXd scaled_rc(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const double r_c = t_c[i] - (params.kappa_c * x[i] - red.jac.v1[i]) * dir.d_eps;
    scaled_rc[i] = r_c * red.g_inv[i];
  }

  const Eigen::VectorXd rhs = r_p - apply_A(problem, scaled_rc);
  dir.solve_info = solver.solve(red.v, params.sigma, params.kappa_p * iterate.eps, rhs, inner_tol);
  dir.dy = dir.solve_info.dy;

  // Δx = G⁻¹(r_c + σ V₂ AᵀΔy)
  const Eigen::VectorXd at_dy = apply_At(problem, dir.dy);
  dir.dx.resize(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    dir.dx[i] = scaled_rc[i] + params.sigma * red.v[i] * at_dy[i];
  }
}

}  // namespace

template <class Problem>
NewtonDirection newton_direction(const Problem& problem, const SmoothingParams& params,
                                 const SolverConfig& config, const SmoothingIterate& iterate,
                                 double zeta_k, NormalEquationSolver& solver) {
  const double eps = iterate.eps;
  ReducedSystem red;
  red.jac = phi_jacobians(eps, iterate.eval.w);
  // G = (1+κ_cε)I − V₂,  v = V₂G⁻¹ diagonal
  const double ck = 1.0 + params.kappa_c * eps;
  const Eigen::Index size = iterate.x.size();
  red.g_inv.resize(size);
  red.v.resize(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    red.g_inv[i] = 1.0 / (ck - red.jac.v2[i]);
    red.v[i] = red.jac.v2[i] * red.g_inv[i];
  }

  const double ehat_norm = iterate.eval.norm();
  const double inner_tol = 1e-2 * std::min(1.0, ehat_norm);
  NewtonDirection dir;
  reduced_solve(problem, params, iterate, red, -eps + zeta_k * config.eps0,
                -iterate.eval.primal_residual, -iterate.eval.comp_residual, inner_tol, solver,
                dir);
  if (dir.solve_info.path == LinearPath::Pcg) return dir;

  // The normal equation carries entries up to 1/ε, so a direct solve can lose
  // digits the full system does not have. One refinement pass against the
  // full residual recovers them.
  const Eigen::VectorXd res = newton_residual(problem, params, config, iterate, zeta_k, dir);
  if (res.norm() <= kNewtonRefineTol * (1.0 + ehat_norm)) return dir;
  const Eigen::Index ny = iterate.eval.primal_residual.size();
  NewtonDirection corr;
  reduced_solve(problem, params, iterate, red, -res[0], -res.segment(1, ny), -res.tail(size),
                inner_tol, solver, corr);
  if (corr.solve_info.path == LinearPath::Pcg) return dir;
  dir.d_eps += corr.d_eps;
  dir.dx += corr.dx;
  dir.dy += corr.dy;
  dir.solve_info.iterations += corr.solve_info.iterations;
  ++dir.refinements;
  return dir;
}

template <class Problem>
Eigen::VectorXd newton_residual(const Problem& problem, const SmoothingParams& params,
                                const SolverConfig& config, const SmoothingIterate& iterate,
                                double zeta_k, const NewtonDirection& direction) {
  const double eps = iterate.eps;
  const HuberJacobians jac = phi_jacobians(eps, iterate.eval.w);
  const auto& ev = iterate.eval;

  Eigen::VectorXd res(1 + ev.primal_residual.size() + ev.comp_residual.size());
  res[0] = eps + direction.d_eps - zeta_k * config.eps0;

  res.segment(1, ev.primal_residual.size()) =
      ev.primal_residual + params.kappa_p * direction.d_eps * iterate.y +
      apply_A(problem, direction.dx) + params.kappa_p * eps * direction.dy;

  const Eigen::VectorXd at_dy = apply_At(problem, direction.dy);
  const double ck = 1.0 + params.kappa_c * eps;
  auto tail = res.tail(ev.comp_residual.size());
  for (Eigen::Index i = 0; i < tail.size(); ++i) {
    tail[i] = ev.comp_residual[i] +
              (params.kappa_c * iterate.x[i] - jac.v1[i]) * direction.d_eps +
              (ck - jac.v2[i]) * direction.dx[i] - params.sigma * jac.v2[i] * at_dy[i];
  }
  return res;
}

template <class Problem>
LineSearchResult line_search(const Problem& problem, const SmoothingParams& params,
                             const SolverConfig& config, const SmoothingIterate& iterate,
                             const NewtonDirection& direction) {
  LineSearchResult result;
  const double phi = iterate.eval.merit;
  const double slope = 2.0 * config.mu * (1.0 - config.delta());
  double step = 1.0;
  for (int ell = 0; ell <= config.max_linesearch; ++ell, step *= config.rho) {
    SmoothingIterate trial = make_iterate(problem, params, iterate.eps + step * direction.d_eps,
                                          iterate.x + step * direction.dx,
                                          iterate.y + step * direction.dy);
    if (trial.eval.merit <= (1.0 - slope * step) * phi && trial.eval.merit < phi) {
      result.accepted = true;
      result.step = step;
      result.backtracks = ell;
      result.next = std::move(trial);
      return result;
    }
  }
  return result;
}

template <class Problem>
SolveReport run_smoothing_newton(const Problem& problem, const SolverConfig& config,
                                 SmoothingIterate initial, NormalEquationSolver& solver) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const SmoothingParams params = SmoothingParams::from(config, problem);
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  SolveReport report;
  report.sigma = params.sigma;
  SmoothingIterate it =
      make_iterate(problem, params, initial.eps, std::move(initial.x), std::move(initial.y));

  KktMetrics metrics;
  int k = 0;
  for (;; ++k) {
    const PrimalDual original = unscale_solution(problem, it.x, it.y);
    metrics = kkt_metrics(problem, original.x, original.y);
    if (metrics.worst() <= config.tol) {
      report.status = SolveStatus::Optimal;
      break;
    }
    if (it.eps < config.tol * 1e-2) {
      report.status = SolveStatus::EpsFloor;
      break;
    }
    if (k >= config.max_iter) {
      report.status = SolveStatus::MaxIter;
      break;
    }
    if (elapsed() >= config.time_limit_secs) {
      report.status = SolveStatus::TimeLimit;
      break;
    }

    const double zeta_k = zeta(config, it.eval.norm());
    NewtonDirection dir;
    try {
      dir = newton_direction(problem, params, config, it, zeta_k, solver);
    } catch (const LinearSolveFailed&) {
      report.status = SolveStatus::LinearSolveFailed;
      break;
    }

    LineSearchResult ls = line_search(problem, params, config, it, dir);
    if (!ls.accepted) {
      report.status = SolveStatus::LineSearchFail;
      break;
    }

    IterationRecord rec;
    rec.iter = k;
    rec.merit = it.eval.merit;
    rec.merit_next = ls.next.eval.merit;
    rec.eps = it.eps;
    rec.zeta = zeta_k;
    rec.step = ls.step;
    rec.lin_iters = dir.solve_info.iterations;
    rec.nnz_v = dir.solve_info.nnz_v;
    rec.path = dir.solve_info.path;
    report.log.push_back(rec);

    it = std::move(ls.next);
  }

  const PrimalDual original = unscale_solution(problem, it.x, it.y);
  report.iterations = k;
  report.eta_p = metrics.eta_p;
  report.eta_d = metrics.eta_d;
  report.eta_c = metrics.eta_c;
  report.eta_g = metrics.eta_g;
  report.objective_primal = metrics.objective_primal;
  report.objective_dual = metrics.objective_dual;
  report.final_eps = it.eps;
  report.x = original.x;
  report.y = original.y;
  report.solve_seconds = elapsed();
  return report;
}

#define SQSN_INSTANTIATE(Problem)                                                          \
  template SmoothingIterate make_iterate<Problem>(const Problem&, const SmoothingParams&,  \
                                                  double, Eigen::VectorXd,                 \
                                                  Eigen::VectorXd);                        \
  template NewtonDirection newton_direction<Problem>(                                      \
      const Problem&, const SmoothingParams&, const SolverConfig&, const SmoothingIterate&, \
      double, NormalEquationSolver&);                                                      \
  template Eigen::VectorXd newton_residual<Problem>(                                       \
      const Problem&, const SmoothingParams&, const SolverConfig&, const SmoothingIterate&, \
      double, const NewtonDirection&);                                                     \
  template LineSearchResult line_search<Problem>(const Problem&, const SmoothingParams&,   \
                                                 const SolverConfig&,                      \
                                                 const SmoothingIterate&,                  \
                                                 const NewtonDirection&);                  \
  template SolveReport run_smoothing_newton<Problem>(const Problem&, const SolverConfig&,  \
                                                     SmoothingIterate, NormalEquationSolver&);

SQSN_INSTANTIATE(OtProblem)
SQSN_INSTANTIATE(WbProblem)

#undef SQSN_INSTANTIATE

}  // namespace sqsn
