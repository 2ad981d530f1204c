#pragma once

#include <vector>

#include <Eigen/Core>

#include "sqsn/linalg.hpp"
#include "sqsn/model.hpp"
#include "sqsn/smoothing_newton.hpp"

namespace sqsn {

// Block pieces of λI + AΘAᵀ for the barycenter LP with Θ = σ·Diag(v).
//
//   E1 = Diag(V_tᵀe) + λI          (column-sum rows, diagonal)
//   E2 = Diag(V_tᵀ)                (coupling, one block per t)
//   E3 = Diag(V_t e) + (e eᵀ)⊗Diag(θ̄) + λI
//
// and the Schur complement S = E3 − E2ᵀE1⁻¹E2 = Diag(S_t) + (e eᵀ)⊗Diag(θ̄).
struct WbNewtonBlocks {
  int num_dists = 0;
  int m = 0;
  std::vector<int> n;
  double lambda = 1.0;
  std::vector<Eigen::VectorXd> theta_t;
  Eigen::VectorXd theta_bar;
  std::vector<SparseMatrix> V_t;
  std::vector<int> e1_offset;
  Eigen::VectorXd e1_diag;
  std::vector<SparseSymMatrix> schur_blocks;
  Eigen::VectorXd low_rank_diag;  // √θ̄

  int total_n() const;
  int dual_dim() const { return total_n() + num_dists * m; }
  long nnz() const;
};

/// Θ = σ·v split per plan and for the weight block; V_t, E1 and S_t formed
/// sparsely.
WbNewtonBlocks build_blocks_from_theta(const WbProblem& problem, const Eigen::VectorXd& theta,
                                       double lambda);

/// v = v2/(1 + κ_cε − v2), Θ = σ·v, λ = κ_pε.
WbNewtonBlocks build_blocks(const WbProblem& problem, double eps, const Eigen::VectorXd& v2,
                            const SolverConfig& config);

/// The full Schur complement S as one sparse symmetric matrix.
SparseSymMatrix assemble_schur(const WbNewtonBlocks& blocks);

/// S·u applied with the coupling term kept matrix-free.
void apply_schur(const WbNewtonBlocks& blocks, const Eigen::VectorXd& u, Eigen::VectorXd& out);

/// (λI + AΘAᵀ)·y, blockwise.
Eigen::VectorXd apply_normal_wb(const WbNewtonBlocks& blocks, const Eigen::VectorXd& y);

enum class SchurMethod { Pcg, Direct };

struct WbSolveOptions {
  SchurMethod method = SchurMethod::Pcg;
  double pcg_tol = 1e-12;
  int pcg_max_iter = 80;
};

struct WbDualStep {
  Eigen::VectorXd dy;  // (Δy₁; Δy₂)
  int pcg_iterations = 0;
  bool used_direct = false;
};

/// Solves (λI + AΘAᵀ)Δy = R by eliminating Δy₁. The Schur system goes to PCG
/// first; if that does not converge within `pcg_max_iter` steps it is solved
/// by sparse Cholesky. Throws LinearSolveFailed when both fail.
WbDualStep solve_dy_wb(const WbNewtonBlocks& blocks, const Eigen::VectorXd& rhs,
                       const WbSolveOptions& options = {});

/// Normal-equation solver for WB. Once PCG needs more than 80 steps the
/// solver switches to the direct path for the rest of the run.
class WbNormalSolver final : public NormalEquationSolver {
 public:
  WbNormalSolver(const WbProblem& problem, LinearSolverKind kind)
      : problem_(problem), direct_(kind == LinearSolverKind::Direct) {}

  NormalSolveResult solve(const Eigen::VectorXd& v, double sigma, double lambda,
                          const Eigen::VectorXd& rhs, double inner_tol) override;

  bool switched_to_direct() const { return direct_; }

 private:
  const WbProblem& problem_;
  bool direct_;
};

/// Π⁽ᵗ⁾ = (e/m)(a⁽ᵗ⁾)ᵀ, w = e/m on scaled data, y = 0, ε = ε⁰.
SmoothingIterate initial_iterate_wb(const WbProblem& problem, const SolverConfig& config);

NewtonDirection newton_direction_wb(const WbProblem& problem, const SolverConfig& config,
                                    const SmoothingIterate& iterate);

SolveReport solve_wb(const WbProblem& problem, const SolverConfig& config = {});

}  // namespace sqsn
