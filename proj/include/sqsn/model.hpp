#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sqsn {

/// Cost/right-hand side of a standard-form LP  min ⟨c,x⟩ s.t. Ax = d, x ≥ 0,
/// kept in original form and in the scaled form ĉ = c/‖c‖, d̂ = d/‖d‖ the
/// solver iterates on.
struct LinearData {
  Eigen::VectorXd cost;
  Eigen::VectorXd rhs;
  Eigen::VectorXd cost_scaled;
  Eigen::VectorXd rhs_scaled;
  double scale_c = 1.0;
  double scale_d = 1.0;

  /// Fills the scaled copies; with `enabled == false` the scale factors are 1.
  void apply_scaling(bool enabled);
};

struct OtOptions {
  bool drop_last_row = true;
  bool scale = true;
};

// Discrete optimal transport instance
//
//   min ⟨C, X⟩  s.t.  X e_n = a,  Xᵀ e_m = b,  X ≥ 0.
//
// Primal vectors are vec(X), column-major (x[i + j·m] = X(i, j)). The dual
// vector is (f; g); with drop_last_row the redundant constraint on the last
// column sum is removed, so g has n − 1 entries.
struct OtProblem : LinearData {
  int m = 0;
  int n = 0;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  bool drop_last_row = true;

  /// Validates (marginals sum to 1 within 1e-12 and are strictly positive,
  /// costs finite and nonnegative) and builds the scaled data.
  static OtProblem create(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b, const OtOptions& options = {});

  int primal_dim() const { return m * n; }
  int dual_dim() const { return m + n - (drop_last_row ? 1 : 0); }
  Eigen::Map<const Eigen::MatrixXd> cost_matrix() const {
    return {cost.data(), m, n};
  }
};

// Fixed-support Wasserstein barycenter LP
//
//   min Σ_t ⟨D⁽ᵗ⁾, Π⁽ᵗ⁾⟩  s.t.  Π⁽ᵗ⁾ e = w,  Π⁽ᵗ⁾ᵀ e = a⁽ᵗ⁾,  Π⁽ᵗ⁾ ≥ 0,
//
// with D⁽ᵗ⁾ = γ_t 𝒟_t. Primal x = (vec Π⁽¹⁾; …; vec Π⁽ᴺ⁾; w), dual
// y = (y₁; y₂) with y₁ = (column-sum multipliers per t) and y₂ = (row-sum
// multipliers per t). Each distribution may have its own support size n_t.
struct WbProblem : LinearData {
  int num_dists = 0;
  int m = 0;
  std::vector<int> n;
  std::vector<Eigen::VectorXd> marginals;
  Eigen::VectorXd weights;

  std::vector<int> plan_offset;  // start of vec Π⁽ᵗ⁾ in x
  int weight_offset = 0;         // start of w in x
  std::vector<int> y1_offset;    // start of block t of y₁ in y
  std::vector<int> y2_offset;    // start of block t of y₂ in y

  /// `distances[t]` is the unweighted m × n_t ground cost 𝒟_t.
  static WbProblem create(const std::vector<Eigen::MatrixXd>& distances,
                          const std::vector<Eigen::VectorXd>& marginals,
                          const Eigen::VectorXd& weights, bool scale = true);

  int primal_dim() const { return weight_offset + m; }
  int dual_dim() const { return y2_offset.empty() ? 0 : y2_offset.back() + m; }
  int total_n() const { return y2_offset.empty() ? 0 : y2_offset.front(); }
};

enum class LinearSolverKind { Auto, Direct, Pcg };

struct SolverConfig {
  double eps0 = 1.0;
  double r = 0.75;
  double tau = 0.25;
  double rho = 0.5;
  double mu = 1e-8;
  /// Default min{1e3, ‖c‖} on the unscaled cost.
  std::optional<double> sigma;
  double kappa_p = 1.0;
  double kappa_c = 1.0;
  double tol = 1e-8;
  int max_iter = 1000;
  double time_limit_secs = 86400.0;
  int max_linesearch = 50;
  LinearSolverKind linear_solver = LinearSolverKind::Auto;

  /// Throws std::invalid_argument when a parameter is out of range.
  void validate() const;
  double delta() const { return r * eps0; }
};

double resolve_sigma(const SolverConfig& config, const LinearData& data);

/// Constants entering the smoothed map.
struct SmoothingParams {
  double sigma = 1.0;
  double kappa_p = 1.0;
  double kappa_c = 1.0;

  static SmoothingParams from(const SolverConfig& config, const LinearData& data);
};

Eigen::VectorXd apply_A(const OtProblem& problem, const Eigen::VectorXd& x);
Eigen::VectorXd apply_At(const OtProblem& problem, const Eigen::VectorXd& y);
Eigen::VectorXd apply_A(const WbProblem& problem, const Eigen::VectorXd& x);
Eigen::VectorXd apply_At(const WbProblem& problem, const Eigen::VectorXd& y);

/// Pieces of 𝓔̂(ε, x, y) = (ε; Ax + κ_pεy − d̂; (1+κ_cε)x − Φ(ε, w)) with
/// w = x + σ(Aᵀy − ĉ), on scaled data.
struct SmoothedEvaluation {
  double eps = 0.0;
  Eigen::VectorXd w;
  Eigen::VectorXd primal_residual;
  Eigen::VectorXd comp_residual;
  double merit = 0.0;

  double norm() const;
  /// Concatenation (ε; primal_residual; comp_residual).
  Eigen::VectorXd stacked() const;
};

SmoothedEvaluation evaluate_smoothed(const OtProblem& problem, const SmoothingParams& params,
                                     double eps, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& y);
SmoothedEvaluation evaluate_smoothed(const WbProblem& problem, const SmoothingParams& params,
                                     double eps, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& y);

/// 𝓔(ε, x, y) on scaled data: (Ax + κ_pεy − d̂; (1+κ_cε)x − Φ(ε, x + σ(Aᵀy − ĉ))).
Eigen::VectorXd smoothed_map(const OtProblem& problem, const SolverConfig& config, double eps,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& y);
Eigen::VectorXd smoothed_map(const WbProblem& problem, const SolverConfig& config, double eps,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct EhatMerit {
  Eigen::VectorXd ehat;
  double phi = 0.0;
};

EhatMerit ehat_and_merit(const OtProblem& problem, const SolverConfig& config, double eps,
                         const Eigen::VectorXd& x, const Eigen::VectorXd& y);
EhatMerit ehat_and_merit(const WbProblem& problem, const SolverConfig& config, double eps,
                         const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// ζ = r · min{1, ‖𝓔̂‖^(1+τ)}.
double zeta(const SolverConfig& config, double ehat_norm);

struct KktMetrics {
  double eta_p = 0.0;
  double eta_d = 0.0;
  double eta_c = 0.0;
  double eta_g = 0.0;
  double objective_primal = 0.0;
  double objective_dual = 0.0;

  double eta_max() const;
  /// max{η_p, η_d, η_c, η_g}
  double worst() const;
};

/// Relative KKT residues on original data, with z = c − Aᵀy.
KktMetrics kkt_metrics(const OtProblem& problem, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& y);
KktMetrics kkt_metrics(const WbProblem& problem, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& y);

struct PrimalDual {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

/// x = ‖d‖·x̂,  y = ‖c‖·ŷ.
PrimalDual unscale_solution(const LinearData& data, const Eigen::VectorXd& x_scaled,
                            const Eigen::VectorXd& y_scaled);

enum class SolveStatus { Optimal, EpsFloor, MaxIter, TimeLimit, LineSearchFail, LinearSolveFailed };

std::string to_string(SolveStatus status);
std::optional<SolveStatus> parse_status(const std::string& name);

enum class LinearPath { None, Components, Monolithic, Pcg, Diagonal };

std::string to_string(LinearPath path);

/// One accepted iteration of the smoothing Newton loop.
struct IterationRecord {
  int iter = 0;
  double merit = 0.0;       // φ at the start of the iteration
  double merit_next = 0.0;  // φ after the accepted step
  double eps = 0.0;
  double zeta = 0.0;        // ζ_k at the start of the iteration
  double step = 0.0;
  int lin_iters = 0;
  long nnz_v = 0;
  LinearPath path = LinearPath::None;
};

struct PlanEntry {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct TransportPlan {
  int rows = 0;
  int cols = 0;
  std::vector<PlanEntry> entries;
};

struct SolveReport {
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
  double eta_p = 0.0;
  double eta_d = 0.0;
  double eta_c = 0.0;
  double eta_g = 0.0;
  double objective_primal = 0.0;
  double objective_dual = 0.0;
  double sigma = 0.0;
  double final_eps = 0.0;
  double solve_seconds = 0.0;
  long nnz_plan = 0;
  /// Unscaled final iterate.
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  /// One plan for OT, N plans for WB.
  std::vector<TransportPlan> plans;
  /// WB only: barycenter weights w, clipped at zero.
  Eigen::VectorXd barycenter;
  std::vector<IterationRecord> log;
};

/// Plan entries with value above `relative_drop` times the largest entry.
inline constexpr double kPlanDropTolerance = 1e-12;

TransportPlan extract_plan(const double* values, int rows, int cols,
                           double relative_drop = kPlanDropTolerance);

}  // namespace sqsn
