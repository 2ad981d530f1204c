#pragma once

#include <stdexcept>

#include <Eigen/Core>

#include "sqsn/model.hpp"

namespace sqsn {

/// Raised when every linear-solver route for a Newton system failed.
class LinearSolveFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NormalSolveResult {
  Eigen::VectorXd dy;
  int iterations = 0;
  LinearPath path = LinearPath::None;
  long nnz_v = 0;
};

// Solves the reduced Newton system
//
//   (λI + σ A Diag(v) Aᵀ) Δy = rhs,   v_i = v2_i / (1 + κ_cε − v2_i),
//
// for one problem structure. Implementations may keep state across calls
// (for instance a sticky switch from PCG to a direct factorization).
class NormalEquationSolver {
 public:
  virtual ~NormalEquationSolver() = default;
  /// `inner_tol` is the iterative-solver tolerance; direct paths ignore it.
  virtual NormalSolveResult solve(const Eigen::VectorXd& v, double sigma, double lambda,
                                  const Eigen::VectorXd& rhs, double inner_tol) = 0;
};

struct SmoothingIterate {
  double eps = 0.0;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  SmoothedEvaluation eval;
};

template <class Problem>
SmoothingIterate make_iterate(const Problem& problem, const SmoothingParams& params, double eps,
                              Eigen::VectorXd x, Eigen::VectorXd y);

struct NewtonDirection {
  double d_eps = 0.0;
  Eigen::VectorXd dx;
  Eigen::VectorXd dy;
  NormalSolveResult solve_info;
  int refinements = 0;
};

/// Full-system residual, relative to 1 + ‖𝓔̂‖, below which a direct-path
/// Newton direction skips its single refinement pass.
inline constexpr double kNewtonRefineTol = 1e-12;

/// Newton step for 𝓔̂(ε,x,y) + 𝓔̂′(ε,x,y)Δ = (ζ ε⁰; 0; 0), reduced to the
/// normal equation in Δy and back-substituted for Δx.
template <class Problem>
NewtonDirection newton_direction(const Problem& problem, const SmoothingParams& params,
                                 const SolverConfig& config, const SmoothingIterate& iterate,
                                 double zeta_k, NormalEquationSolver& solver);

/// 𝓔̂ + 𝓔̂′Δ − (ζ ε⁰; 0; 0), applied matrix-free.
template <class Problem>
Eigen::VectorXd newton_residual(const Problem& problem, const SmoothingParams& params,
                                const SolverConfig& config, const SmoothingIterate& iterate,
                                double zeta_k, const NewtonDirection& direction);

struct LineSearchResult {
  bool accepted = false;
  double step = 0.0;
  int backtracks = 0;
  SmoothingIterate next;
};

/// Backtracking on the merit function: the smallest ℓ ≤ max_linesearch with
/// φ(z + ρ^ℓ Δ) ≤ [1 − 2μ(1 − δ)ρ^ℓ] φ(z) and φ(z + ρ^ℓ Δ) < φ(z).
template <class Problem>
LineSearchResult line_search(const Problem& problem, const SmoothingParams& params,
                             const SolverConfig& config, const SmoothingIterate& iterate,
                             const NewtonDirection& direction);

/// Runs the smoothing Newton loop from `initial` (scaled coordinates) and
/// fills the status, metrics, unscaled iterate and log of the report. Plans
/// are left to the caller.
template <class Problem>
SolveReport run_smoothing_newton(const Problem& problem, const SolverConfig& config,
                                 SmoothingIterate initial, NormalEquationSolver& solver);

}  // namespace sqsn
