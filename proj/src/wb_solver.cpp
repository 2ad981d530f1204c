#include "sqsn/wb_solver.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace sqsn {

int WbNewtonBlocks::total_n() const {
  int total = 0;
  for (int nt : n) total += nt;
  return total;
}

long WbNewtonBlocks::nnz() const {
  long total = 0;
  for (const auto& V : V_t) total += static_cast<long>(V.nonZeros());
  for (Eigen::Index i = 0; i < theta_bar.size(); ++i) total += theta_bar[i] > 0.0 ? 1 : 0;
  return total;
}

namespace {

// S_t = Diag(V e + λ) − V Diag(Vᵀe + λ)⁻¹ Vᵀ. The diagonal is summed as
// Σ_j V_ij (c_j − V_ij + λ)/(c_j + λ) + λ with c_j − V_ij taken from prefix and
// suffix sums of column j, so it never subtracts nearly equal numbers.
SparseSymMatrix schur_block(const SparseMatrix& V, const Eigen::VectorXd& e1, double lambda) {
  const int m = static_cast<int>(V.rows());
  Eigen::VectorXd diag = Eigen::VectorXd::Constant(m, lambda);
  std::vector<double> prefix;
  for (int j = 0; j < V.outerSize(); ++j) {
    const int begin = V.outerIndexPtr()[j];
    const int end = V.outerIndexPtr()[j + 1];
    const double* val = V.valuePtr();
    const int* row = V.innerIndexPtr();
    prefix.assign(static_cast<std::size_t>(end - begin + 1), 0.0);
    for (int k = begin; k < end; ++k) prefix[k - begin + 1] = prefix[k - begin] + val[k];
    double suffix = 0.0;
    for (int k = end - 1; k >= begin; --k) {
      const double others = prefix[k - begin] + suffix;
      diag[row[k]] += val[k] * (others + lambda) / e1[j];
      suffix += val[k];
    }
  }

  SparseMatrix W = V * e1.cwiseInverse().asDiagonal();
  SparseMatrix P = (W * SparseMatrix(V.transpose())).pruned();
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(P.nonZeros() / 2 + m));
  for (int i = 0; i < m; ++i) entries.emplace_back(i, i, diag[i]);
  for (int k = 0; k < P.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(P, k); it; ++it) {
      if (it.row() > k) entries.emplace_back(static_cast<int>(it.row()), k, -it.value());
    }
  }
  return SparseSymMatrix::from_triplets(m, entries);
}

}  // namespace

WbNewtonBlocks build_blocks_from_theta(const WbProblem& problem, const Eigen::VectorXd& theta,
                                       double lambda) {
  if (theta.size() != problem.primal_dim()) {
    throw DimensionMismatch("build_blocks: theta has wrong length");
  }
  if (!(lambda > 0.0)) throw std::domain_error("build_blocks: lambda must be positive");
  WbNewtonBlocks b;
  b.num_dists = problem.num_dists;
  b.m = problem.m;
  b.n = problem.n;
  b.lambda = lambda;
  b.theta_bar = theta.tail(problem.m);
  b.low_rank_diag = b.theta_bar.cwiseSqrt();
  b.e1_diag.resize(problem.total_n());
  const int m = problem.m;
  for (int t = 0; t < problem.num_dists; ++t) {
    const int nt = problem.n[t];
    b.theta_t.emplace_back(theta.segment(problem.plan_offset[t], static_cast<Eigen::Index>(m) * nt));
    const Eigen::VectorXd& th = b.theta_t.back();
    SparseMatrix V(m, nt);
    Eigen::Index nnz = 0;
    for (Eigen::Index k = 0; k < th.size(); ++k) nnz += th[k] > 0.0 ? 1 : 0;
    V.reserve(nnz);
    Eigen::VectorXd e1(nt);
    for (int j = 0; j < nt; ++j) {
      V.startVec(j);
      double s = 0.0;
      for (int i = 0; i < m; ++i) {
        const double val = th[i + static_cast<Eigen::Index>(j) * m];
        if (val > 0.0) {
          V.insertBack(i, j) = val;
          s += val;
        }
      }
      e1[j] = s + lambda;
    }
    V.finalize();
    b.e1_offset.push_back(problem.y1_offset[t]);
    b.e1_diag.segment(problem.y1_offset[t], nt) = e1;
    b.schur_blocks.push_back(schur_block(V, e1, lambda));
    b.V_t.push_back(std::move(V));
  }
  return b;
}

WbNewtonBlocks build_blocks(const WbProblem& problem, double eps, const Eigen::VectorXd& v2,
                            const SolverConfig& config) {
  if (!(eps > 0.0)) throw std::domain_error("build_blocks: eps must be positive");
  const double sigma = resolve_sigma(config, problem);
  const double ck = 1.0 + config.kappa_c * eps;
  Eigen::VectorXd theta(v2.size());
  for (Eigen::Index i = 0; i < v2.size(); ++i) theta[i] = sigma * v2[i] / (ck - v2[i]);
  return build_blocks_from_theta(problem, theta, config.kappa_p * eps);
}

SparseSymMatrix assemble_schur(const WbNewtonBlocks& b) {
  const int m = b.m;
  const int dim = b.num_dists * m;
  std::vector<Triplet> entries;
  for (int t = 0; t < b.num_dists; ++t) {
    const SparseMatrix& L = b.schur_blocks[t].lower();
    for (int k = 0; k < L.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(L, k); it; ++it) {
        entries.emplace_back(t * m + static_cast<int>(it.row()), t * m + k, it.value());
      }
    }
  }
  for (int i = 0; i < m; ++i) {
    const double tb = b.theta_bar[i];
    if (tb == 0.0) continue;
    for (int t = 0; t < b.num_dists; ++t) {
      for (int s = 0; s <= t; ++s) entries.emplace_back(t * m + i, s * m + i, tb);
    }
  }
  return SparseSymMatrix::from_triplets(dim, entries);
}

void apply_schur(const WbNewtonBlocks& b, const Eigen::VectorXd& u, Eigen::VectorXd& out) {
  const int m = b.m;
  out.resize(u.size());
  Eigen::VectorXd coupled = Eigen::VectorXd::Zero(m);
  for (int t = 0; t < b.num_dists; ++t) {
    out.segment(t * m, m) = b.schur_blocks[t].multiply(u.segment(t * m, m));
    coupled += u.segment(t * m, m);
  }
  coupled.array() *= b.theta_bar.array();
  for (int t = 0; t < b.num_dists; ++t) out.segment(t * m, m) += coupled;
}

Eigen::VectorXd apply_normal_wb(const WbNewtonBlocks& b, const Eigen::VectorXd& y) {
  if (y.size() != b.dual_dim()) throw DimensionMismatch("apply_normal_wb: wrong length");
  const int m = b.m;
  const int y2 = b.total_n();
  Eigen::VectorXd out(y.size());
  Eigen::VectorXd coupled = Eigen::VectorXd::Zero(m);
  for (int t = 0; t < b.num_dists; ++t) coupled += y.segment(y2 + t * m, m);
  coupled.array() *= b.theta_bar.array();
  for (int t = 0; t < b.num_dists; ++t) {
    const SparseMatrix& V = b.V_t[t];
    const int nt = b.n[t];
    const auto y1t = y.segment(b.e1_offset[t], nt);
    const auto y2t = y.segment(y2 + t * m, m);
    const Eigen::VectorXd row_sums = V * Eigen::VectorXd::Ones(nt);
    out.segment(b.e1_offset[t], nt) =
        b.e1_diag.segment(b.e1_offset[t], nt).cwiseProduct(y1t) + V.transpose() * y2t;
    out.segment(y2 + t * m, m) = (row_sums.array() + b.lambda).matrix().cwiseProduct(y2t) +
                                 V * y1t + coupled;
  }
  return out;
}

WbDualStep solve_dy_wb(const WbNewtonBlocks& b, const Eigen::VectorXd& rhs,
                       const WbSolveOptions& options) {
  if (rhs.size() != b.dual_dim()) throw DimensionMismatch("solve_dy_wb: rhs has wrong length");
  const int m = b.m;
  const int y2 = b.total_n();
  const int dim = b.num_dists * m;

  // R₃ = R₂ − E₂ᵀE₁⁻¹R₁
  Eigen::VectorXd r3(dim);
  for (int t = 0; t < b.num_dists; ++t) {
    const Eigen::VectorXd scaled =
        rhs.segment(b.e1_offset[t], b.n[t]).cwiseQuotient(b.e1_diag.segment(b.e1_offset[t], b.n[t]));
    r3.segment(t * m, m) = rhs.segment(y2 + t * m, m) - b.V_t[t] * scaled;
  }

  WbDualStep step;
  const SparseSymMatrix S = assemble_schur(b);
  std::optional<Eigen::VectorXd> dy2;
  if (options.method == SchurMethod::Pcg) {
    try {
      const IncompleteCholesky ic = incomplete_cholesky(S);
      PcgOptions opts;
      opts.tol = options.pcg_tol;
      opts.max_iter = options.pcg_max_iter;
      PcgResult res = pcg([&b](const Eigen::VectorXd& u, Eigen::VectorXd& out) { apply_schur(b, u, out); },
                          r3, &ic, opts);
      step.pcg_iterations = res.iterations;
      if (res.converged) dy2 = std::move(res.x);
    } catch (const DecompositionFailed&) {
    }
  }
  if (!dy2) {
    step.used_direct = true;
    try {
      const CholFactor factor = sparse_cholesky(S);
      dy2 = solve_refined(S, factor, r3);
    } catch (const NotPositiveDefinite&) {
      throw LinearSolveFailed("WB Schur complement: PCG and Cholesky both failed");
    }
  }

  // Δy₁ᵗ = (R₁ᵗ − V_tᵀΔy₂ᵗ) ⊘ (V_tᵀe + λ)
  step.dy.resize(b.dual_dim());
  step.dy.tail(dim) = *dy2;
  for (int t = 0; t < b.num_dists; ++t) {
    const int off = b.e1_offset[t];
    step.dy.segment(off, b.n[t]) =
        (rhs.segment(off, b.n[t]) - b.V_t[t].transpose() * dy2->segment(t * m, m))
            .cwiseQuotient(b.e1_diag.segment(off, b.n[t]));
  }
  return step;
}

NormalSolveResult WbNormalSolver::solve(const Eigen::VectorXd& v, double sigma, double lambda,
                                        const Eigen::VectorXd& rhs, double inner_tol) {
  const WbNewtonBlocks blocks = build_blocks_from_theta(problem_, sigma * v, lambda);
  WbSolveOptions opts;
  opts.method = direct_ ? SchurMethod::Direct : SchurMethod::Pcg;
  opts.pcg_tol = inner_tol;
  WbDualStep step = solve_dy_wb(blocks, rhs, opts);
  if (step.used_direct) direct_ = true;

  NormalSolveResult out;
  out.dy = std::move(step.dy);
  out.iterations = step.pcg_iterations;
  out.path = step.used_direct ? LinearPath::Monolithic : LinearPath::Pcg;
  out.nnz_v = blocks.nnz();
  return out;
}

SmoothingIterate initial_iterate_wb(const WbProblem& problem, const SolverConfig& config) {
  const int m = problem.m;
  Eigen::VectorXd x(problem.primal_dim());
  for (int t = 0; t < problem.num_dists; ++t) {
    for (int j = 0; j < problem.n[t]; ++j) {
      x.segment(problem.plan_offset[t] + static_cast<Eigen::Index>(j) * m, m).setConstant(
          problem.marginals[t][j] / m);
    }
  }
  x.tail(m).setConstant(1.0 / m);
  x /= problem.scale_d;
  return make_iterate(problem, SmoothingParams::from(config, problem), config.eps0, std::move(x),
                      Eigen::VectorXd::Zero(problem.dual_dim()));
}

NewtonDirection newton_direction_wb(const WbProblem& problem, const SolverConfig& config,
                                    const SmoothingIterate& iterate) {
  WbNormalSolver solver(problem, config.linear_solver);
  return newton_direction(problem, SmoothingParams::from(config, problem), config, iterate,
                          zeta(config, iterate.eval.norm()), solver);
}

SolveReport solve_wb(const WbProblem& problem, const SolverConfig& config) {
  WbNormalSolver solver(problem, config.linear_solver);
  SolveReport report =
      run_smoothing_newton(problem, config, initial_iterate_wb(problem, config), solver);
  report.nnz_plan = 0;
  for (int t = 0; t < problem.num_dists; ++t) {
    report.plans.push_back(
        extract_plan(report.x.data() + problem.plan_offset[t], problem.m, problem.n[t]));
    report.nnz_plan += static_cast<long>(report.plans.back().entries.size());
  }
  // The smoothed iterate can sit an ulp below zero; a weight vector cannot.
  report.barycenter = report.x.tail(problem.m).cwiseMax(0.0);
  return report;
}

}  // namespace sqsn
