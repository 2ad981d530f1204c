#include "sqsn/ot_solver.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sqsn/smoothing.hpp"

namespace sqsn {

namespace {

// Dual index of sink j, or -1 when its row was dropped.
int sink_index(const NormalSystemOT& s, int j) {
  return (s.drop_last_row && j == s.n - 1) ? -1 : s.m + j;
}

struct Component {
  std::vector<int> nodes;  // dual indices
  std::vector<Triplet> offdiag;  // local (row, col) with row > col
  bool grounded = false;
};

NormalSolveResult monolithic_or_pcg(const NormalSystemOT& system, const Eigen::VectorXd& rhs) {
  const SparseSymMatrix M = normal_matrix(system);
  NormalSolveResult out;
  out.nnz_v = system.nnz();
  try {
    const CholFactor factor = sparse_cholesky(M);
    out.dy = solve_refined(M, factor, rhs);
    out.path = LinearPath::Monolithic;
    return out;
  } catch (const NotPositiveDefinite&) {
  }
  try {
    const IncompleteCholesky ic = incomplete_cholesky(M);
    PcgOptions opts;
    opts.tol = 1e-12;
    opts.max_iter = M.dim();
    PcgResult res = pcg(as_operator(M), rhs, &ic, opts);
    if (res.converged) {
      out.dy = std::move(res.x);
      out.iterations = res.iterations;
      out.path = LinearPath::Pcg;
      return out;
    }
  } catch (const DecompositionFailed&) {
  }
  throw LinearSolveFailed("OT normal equation: direct and PCG solves failed");
}

// Solves (L + λI)u = r for a component whose Laplacian L has the null
// vector s = (+1 on sources, −1 on sinks). The s-direction is solved
// exactly (eigenvalue λ); the remainder uses a factorization of the
// principal submatrix without one grounded node plus a rank-one correction.
class DeflatedBlockSolver {
 public:
  DeflatedBlockSolver(const SparseSymMatrix& local, std::vector<double> signs, double lambda)
      : local_(local), signs_(std::move(signs)), lambda_(lambda) {
    const int k = local.dim();
    const Eigen::VectorXd diag = local.diagonal();
    Eigen::Index g = 0;
    diag.maxCoeff(&g);
    ground_ = static_cast<int>(g);

    std::vector<Triplet> reduced;
    const SparseMatrix& L = local.lower();
    for (int j = 0; j < k; ++j) {
      if (j == ground_) continue;
      for (SparseMatrix::InnerIterator it(L, j); it; ++it) {
        const int i = static_cast<int>(it.row());
        if (i == ground_) continue;
        reduced.emplace_back(shrink(i), shrink(j), it.value());
      }
    }
    reduced_.emplace(SparseSymMatrix::from_triplets(k - 1, reduced));
    factor_.emplace(sparse_cholesky(*reduced_));

    s_reduced_.resize(k - 1);
    for (int i = 0; i < k; ++i) {
      if (i != ground_) s_reduced_[shrink(i)] = signs_[i];
    }
    p_reduced_ = factor_->solve(s_reduced_);
    denom_ = 1.0 - (lambda_ / k) * s_reduced_.dot(p_reduced_);
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd q;
    double beta = 0.0;
    solve_parts(rhs, q, beta);
    // One refinement pass; M·s = λs is applied exactly to avoid cancellation.
    const Eigen::VectorXd q_full = embed(q);
    Eigen::VectorXd residual = rhs - local_.multiply(q_full);
    for (int i = 0; i < local_.dim(); ++i) residual[i] -= beta * lambda_ * signs_[i];
    Eigen::VectorXd dq;
    double dbeta = 0.0;
    solve_parts(residual, dq, dbeta);
    Eigen::VectorXd u = q_full + embed(dq);
    for (int i = 0; i < local_.dim(); ++i) u[i] += (beta + dbeta) * signs_[i];
    return u;
  }

 private:
  int shrink(int i) const { return i < ground_ ? i : i - 1; }

  Eigen::VectorXd embed(const Eigen::VectorXd& q) const {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(local_.dim());
    for (int i = 0; i < local_.dim(); ++i) {
      if (i != ground_) full[i] = q[shrink(i)];
    }
    return full;
  }

  // u = embed(q) + beta·s
  void solve_parts(const Eigen::VectorXd& rhs, Eigen::VectorXd& q, double& beta) const {
    const int k = local_.dim();
    double s_dot_r = 0.0;
    for (int i = 0; i < k; ++i) s_dot_r += signs_[i] * rhs[i];
    const double alpha = s_dot_r / (lambda_ * k);

    Eigen::VectorXd r_perp(k - 1);
    for (int i = 0; i < k; ++i) {
      if (i != ground_) r_perp[shrink(i)] = rhs[i] - (s_dot_r / k) * signs_[i];
    }
    q = factor_->solve(r_perp);
    q += ((lambda_ / k) * s_reduced_.dot(q) / denom_) * p_reduced_;
    const double gamma = -s_reduced_.dot(q) / k;
    beta = alpha + gamma;
  }

  const SparseSymMatrix& local_;
  std::vector<double> signs_;
  double lambda_;
  int ground_ = 0;
  std::optional<SparseSymMatrix> reduced_;
  std::optional<CholFactor> factor_;
  Eigen::VectorXd s_reduced_;
  Eigen::VectorXd p_reduced_;
  double denom_ = 1.0;
};

}  // namespace

NormalSystemOT make_normal_system_ot(const OtProblem& problem, const Eigen::VectorXd& v,
                                     double sigma, double lambda) {
  if (v.size() != problem.primal_dim()) {
    throw DimensionMismatch("make_normal_system_ot: v has wrong length");
  }
  NormalSystemOT s;
  s.m = problem.m;
  s.n = problem.n;
  s.drop_last_row = problem.drop_last_row;
  s.sigma = sigma;
  s.lambda = lambda;
  s.v = v;
  s.row_sums = Eigen::VectorXd::Zero(s.m);
  s.col_sums = Eigen::VectorXd::Zero(s.n);

  Eigen::Index nnz = 0;
  for (Eigen::Index k = 0; k < v.size(); ++k) nnz += v[k] > 0.0 ? 1 : 0;
  s.V.resize(s.m, s.n);
  s.V.reserve(nnz);
  for (int j = 0; j < s.n; ++j) {
    s.V.startVec(j);
    const double* col = v.data() + static_cast<Eigen::Index>(j) * s.m;
    for (int i = 0; i < s.m; ++i) {
      if (col[i] > 0.0) {
        s.V.insertBack(i, j) = col[i];
        s.row_sums[i] += col[i];
        s.col_sums[j] += col[i];
      }
    }
  }
  s.V.finalize();
  s.components = connected_components(s.V);
  return s;
}

NormalSystemOT assemble_normal_ot(const OtProblem& problem, double eps, const Eigen::VectorXd& v2,
                                  const SolverConfig& config) {
  if (!(eps > 0.0)) throw std::domain_error("assemble_normal_ot: eps must be positive");
  const double ck = 1.0 + config.kappa_c * eps;
  Eigen::VectorXd v(v2.size());
  for (Eigen::Index i = 0; i < v2.size(); ++i) v[i] = v2[i] / (ck - v2[i]);
  return make_normal_system_ot(problem, v, resolve_sigma(config, problem), config.kappa_p * eps);
}

SparseSymMatrix normal_matrix(const NormalSystemOT& s) {
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(s.dim() + s.V.nonZeros()));
  for (int i = 0; i < s.m; ++i) entries.emplace_back(i, i, s.lambda + s.sigma * s.row_sums[i]);
  for (int j = 0; j < s.n; ++j) {
    const int jj = sink_index(s, j);
    if (jj < 0) continue;
    entries.emplace_back(jj, jj, s.lambda + s.sigma * s.col_sums[j]);
    for (SparseMatrix::InnerIterator it(s.V, j); it; ++it) {
      entries.emplace_back(jj, static_cast<int>(it.row()), s.sigma * it.value());
    }
  }
  return SparseSymMatrix::from_triplets(s.dim(), entries);
}

NormalSolveResult solve_normal_by_components(const NormalSystemOT& s, const Eigen::VectorXd& rhs) {
  if (rhs.size() != s.dim()) {
    throw DimensionMismatch("solve_normal_by_components: rhs has wrong length");
  }
  const ComponentLabels& labels = s.components;
  std::vector<Component> comps(static_cast<std::size_t>(labels.count));
  std::vector<int> local(static_cast<std::size_t>(s.m + s.n), -1);

  for (int i = 0; i < s.m; ++i) {
    auto& c = comps[labels.row_label[i]];
    local[i] = static_cast<int>(c.nodes.size());
    c.nodes.push_back(i);
  }
  for (int j = 0; j < s.n; ++j) {
    auto& c = comps[labels.col_label[j]];
    const int jj = sink_index(s, j);
    if (jj < 0) {
      c.grounded = true;
      continue;
    }
    local[s.m + j] = static_cast<int>(c.nodes.size());
    c.nodes.push_back(jj);
  }
  for (int j = 0; j < s.n; ++j) {
    if (sink_index(s, j) < 0) continue;
    const int lj = local[s.m + j];
    for (SparseMatrix::InnerIterator it(s.V, j); it; ++it) {
      const int i = static_cast<int>(it.row());
      comps[labels.row_label[i]].offdiag.emplace_back(lj, local[i], s.sigma * it.value());
    }
  }

  auto diag_of = [&s](int node) {
    return s.lambda + s.sigma * (node < s.m ? s.row_sums[node] : s.col_sums[node - s.m]);
  };

  NormalSolveResult out;
  out.nnz_v = s.nnz();
  out.path = LinearPath::Components;
  out.dy = Eigen::VectorXd::Zero(s.dim());
  try {
    for (auto& c : comps) {
      const int k = static_cast<int>(c.nodes.size());
      if (k == 0) continue;
      if (k == 1) {
        out.dy[c.nodes[0]] = rhs[c.nodes[0]] / diag_of(c.nodes[0]);
        continue;
      }
      std::vector<Triplet> entries = std::move(c.offdiag);
      Eigen::VectorXd local_rhs(k);
      std::vector<double> signs(static_cast<std::size_t>(k));
      for (int a = 0; a < k; ++a) {
        entries.emplace_back(a, a, diag_of(c.nodes[a]));
        local_rhs[a] = rhs[c.nodes[a]];
        signs[a] = c.nodes[a] < s.m ? 1.0 : -1.0;
      }
      const SparseSymMatrix block = SparseSymMatrix::from_triplets(k, entries);
      Eigen::VectorXd u;
      if (c.grounded) {
        const CholFactor factor = sparse_cholesky(block);
        u = solve_refined(block, factor, local_rhs);
      } else {
        u = DeflatedBlockSolver(block, std::move(signs), s.lambda).solve(local_rhs);
      }
      for (int a = 0; a < k; ++a) out.dy[c.nodes[a]] = u[a];
    }
  } catch (const NotPositiveDefinite&) {
    return monolithic_or_pcg(s, rhs);
  }
  if (!out.dy.allFinite()) return monolithic_or_pcg(s, rhs);
  return out;
}

NormalSolveResult OtNormalSolver::solve(const Eigen::VectorXd& v, double sigma, double lambda,
                                        const Eigen::VectorXd& rhs, double inner_tol) {
  const NormalSystemOT system = make_normal_system_ot(problem_, v, sigma, lambda);
  const long dense_limit = 20L * (problem_.m + problem_.n);
  const bool use_pcg = kind_ == LinearSolverKind::Pcg ||
                       (kind_ == LinearSolverKind::Auto && system.nnz() > dense_limit);
  if (use_pcg) {
    const SparseSymMatrix M = normal_matrix(system);
    try {
      const IncompleteCholesky ic = incomplete_cholesky(M);
      PcgOptions opts;
      opts.tol = inner_tol;
      opts.max_iter = problem_.m + problem_.n;
      PcgResult res = pcg(as_operator(M), rhs, &ic, opts);
      if (res.converged) {
        NormalSolveResult out;
        out.dy = std::move(res.x);
        out.iterations = res.iterations;
        out.path = LinearPath::Pcg;
        out.nnz_v = system.nnz();
        return out;
      }
    } catch (const DecompositionFailed&) {
    }
  }
  return solve_normal_by_components(system, rhs);
}

SmoothingIterate initial_iterate_ot(const OtProblem& problem, const SolverConfig& config) {
  Eigen::VectorXd x(problem.primal_dim());
  for (int j = 0; j < problem.n; ++j) {
    for (int i = 0; i < problem.m; ++i) {
      x[i + static_cast<Eigen::Index>(j) * problem.m] = problem.a[i] * problem.b[j];
    }
  }
  x /= problem.scale_d;
  return make_iterate(problem, SmoothingParams::from(config, problem), config.eps0, std::move(x),
                      Eigen::VectorXd::Zero(problem.dual_dim()));
}

NewtonDirection newton_direction_ot(const OtProblem& problem, const SolverConfig& config,
                                    const SmoothingIterate& iterate) {
  OtNormalSolver solver(problem, config.linear_solver);
  return newton_direction(problem, SmoothingParams::from(config, problem), config, iterate,
                          zeta(config, iterate.eval.norm()), solver);
}

SolveReport solve_ot(const OtProblem& problem, const SolverConfig& config) {
  OtNormalSolver solver(problem, config.linear_solver);
  SolveReport report =
      run_smoothing_newton(problem, config, initial_iterate_ot(problem, config), solver);
  report.plans.push_back(extract_plan(report.x.data(), problem.m, problem.n));
  report.nnz_plan = static_cast<long>(report.plans.front().entries.size());
  return report;
}

}  // namespace sqsn
