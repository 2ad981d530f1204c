#pragma once

#include <Eigen/Core>

#include "sqsn/linalg.hpp"
#include "sqsn/model.hpp"
#include "sqsn/smoothing_newton.hpp"

namespace sqsn {

// Reduced Newton system of the OT problem,
//
//   λI + σ [ Diag(V e_n)   V          ]
//          [ Vᵀ            Diag(Vᵀe_m) ],
//
// restricted to the retained dual rows. V = Mat(v) keeps only the strictly
// positive entries of v, and the bipartite graph of V is split into its
// connected components.
struct NormalSystemOT {
  int m = 0;
  int n = 0;
  bool drop_last_row = true;
  double sigma = 1.0;
  double lambda = 1.0;
  Eigen::VectorXd v;
  SparseMatrix V;
  Eigen::VectorXd row_sums;
  Eigen::VectorXd col_sums;
  ComponentLabels components;

  int dim() const { return m + n - (drop_last_row ? 1 : 0); }
  long nnz() const { return static_cast<long>(V.nonZeros()); }
};

/// v = v2 / (1 + κ_cε − v2) with σ from the config, λ = κ_pε.
NormalSystemOT assemble_normal_ot(const OtProblem& problem, double eps, const Eigen::VectorXd& v2,
                                  const SolverConfig& config);

NormalSystemOT make_normal_system_ot(const OtProblem& problem, const Eigen::VectorXd& v,
                                     double sigma, double lambda);

SparseSymMatrix normal_matrix(const NormalSystemOT& system);

/// Solves one block per connected component (falling back to a monolithic
/// factorization, then PCG). Components not anchored by the dropped row are
/// solved with the (e; −e) null direction of the Laplacian split off exactly.
NormalSolveResult solve_normal_by_components(const NormalSystemOT& system,
                                             const Eigen::VectorXd& rhs);

/// Normal-equation solver for OT with the `auto` / `direct` / `pcg` policy.
class OtNormalSolver final : public NormalEquationSolver {
 public:
  OtNormalSolver(const OtProblem& problem, LinearSolverKind kind) : problem_(problem), kind_(kind) {}

  NormalSolveResult solve(const Eigen::VectorXd& v, double sigma, double lambda,
                          const Eigen::VectorXd& rhs, double inner_tol) override;

 private:
  const OtProblem& problem_;
  LinearSolverKind kind_;
};

/// x⁰ = vec(a bᵀ)/‖d‖ on scaled data, y⁰ = 0, ε = ε⁰.
SmoothingIterate initial_iterate_ot(const OtProblem& problem, const SolverConfig& config);

NewtonDirection newton_direction_ot(const OtProblem& problem, const SolverConfig& config,
                                    const SmoothingIterate& iterate);

SolveReport solve_ot(const OtProblem& problem, const SolverConfig& config = {});

}  // namespace sqsn
