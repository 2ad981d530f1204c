#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "sqsn/model.hpp"

namespace sqsn {

class SizeLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Standard-form LP  min cᵀx  s.t.  Ax = b, x ≥ 0.
struct DenseLp {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
};

inline constexpr int kOracleMaxVariables = 500;

enum class LpStatus { Optimal, Infeasible, Unbounded };

std::string to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  double objective = 0.0;
  Eigen::VectorXd x;
  /// Multipliers with Aᵀy ≤ c; zero on rows found to be redundant.
  Eigen::VectorXd y;
  int pivots = 0;
};

/// Two-phase tableau simplex with Bland's rule. Redundant equality rows are
/// detected after phase one and dropped.
LpSolution simplex_solve(const DenseLp& lp);

struct OtReference {
  double objective = 0.0;
  Eigen::MatrixXd plan;
  Eigen::VectorXd y;
};

/// Requires m·n ≤ 200. Uses the unscaled cost and drops the last column-sum row.
OtReference ot_reference(const OtProblem& problem);

struct WbReference {
  double objective = 0.0;
  Eigen::VectorXd weights;
  std::vector<Eigen::MatrixXd> plans;
};

/// Requires Σ_t m·n_t + m ≤ 500.
WbReference wb_reference(const WbProblem& problem);

DenseLp dense_ot_lp(const OtProblem& problem);
DenseLp dense_wb_lp(const WbProblem& problem);

}  // namespace sqsn
