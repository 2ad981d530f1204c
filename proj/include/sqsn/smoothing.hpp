#pragma once

#include <Eigen/Core>

namespace sqsn {

// Huber smoothing of the plus function π(t) = max(t, 0):
//
//   h(ε, t) = t − |ε|/2        if t ≥ |ε|
//           = t² / (2|ε|)      if 0 < t < |ε|
//           = 0                if t ≤ 0
//
// with h(0, t) = π(t). Negative arguments map to exactly zero for every ε,
// which is what keeps the Newton systems sparse.

double huber_eval(double eps, double t);

/// ∂h/∂t. Throws std::domain_error for eps == 0.
double huber_dt(double eps, double t);

/// ∂h/∂ε. Throws std::domain_error for eps == 0.
double huber_deps(double eps, double t);

/// Elementwise Φ(ε, w); Φ(0, w) is the projection onto the nonnegative orthant.
Eigen::VectorXd phi_map(double eps, const Eigen::VectorXd& w);

/// Diagonals of the partial Jacobians of Φ: v1 = ∂Φ/∂ε, v2 = ∂Φ/∂w.
struct HuberJacobians {
  Eigen::VectorXd v1;
  Eigen::VectorXd v2;
};

/// Requires eps > 0.
HuberJacobians phi_jacobians(double eps, const Eigen::VectorXd& w);

}  // namespace sqsn
