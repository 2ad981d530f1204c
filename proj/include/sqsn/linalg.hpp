#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace sqsn {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Raised when a Cholesky pivot falls below the pivot floor.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when incomplete Cholesky breaks down even after diagonal shifting.
class DecompositionFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on mismatched vector/matrix dimensions anywhere in the library.
class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Symmetric matrix held as the compressed-column lower triangle.
//
// Construction checks that every diagonal entry is stored and finite and
// that no entry lies above the diagonal.
class SparseSymMatrix {
 public:
  explicit SparseSymMatrix(SparseMatrix lower);

  /// Builds from triplets; entries above the diagonal are mirrored into the
  /// lower triangle and duplicates are summed. Missing diagonals are stored
  /// as explicit zeros.
  static SparseSymMatrix from_triplets(int dim, std::span<const Triplet> entries);

  static SparseSymMatrix from_dense(const Eigen::MatrixXd& dense);

  int dim() const { return static_cast<int>(lower_.rows()); }
  const SparseMatrix& lower() const { return lower_; }
  Eigen::Index nonzeros() const { return lower_.nonZeros(); }

  Eigen::VectorXd diagonal() const;
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd to_dense() const;

  /// Returns S + alpha * Diag(S).
  SparseSymMatrix diagonal_shifted(double alpha) const;

 private:
  SparseMatrix lower_;
};

/// Sparse LLᵀ factor of a symmetric positive definite matrix under a
/// fill-reducing (AMD) symmetric permutation P: P S Pᵀ = L Lᵀ.
class CholFactor {
 public:
  int dim() const { return dim_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// perm[i] is the position of original index i in the permuted ordering.
  const Eigen::VectorXi& permutation() const { return perm_; }
  const SparseMatrix& lower_factor() const { return lower_; }

 private:
  friend CholFactor sparse_cholesky(const SparseSymMatrix& S);

  int dim_ = 0;
  Eigen::VectorXi perm_;
  SparseMatrix lower_;
};

/// Pivots below kPivotFloor * max|diag(S)| raise NotPositiveDefinite.
inline constexpr double kPivotFloor = 1e-13;

CholFactor sparse_cholesky(const SparseSymMatrix& S);

/// Solve with one pass of iterative refinement against S.
Eigen::VectorXd solve_refined(const SparseSymMatrix& S, const CholFactor& factor,
                              const Eigen::VectorXd& b);

/// Zero-fill incomplete Cholesky factor on the pattern of S.
class IncompleteCholesky {
 public:
  /// Applies (L Lᵀ)⁻¹ to r.
  Eigen::VectorXd apply(const Eigen::VectorXd& r) const;
  const SparseMatrix& lower_factor() const { return lower_; }
  /// Diagonal shift factor that was needed (0 when none).
  double shift() const { return shift_; }
  int dim() const { return static_cast<int>(lower_.rows()); }

 private:
  friend IncompleteCholesky incomplete_cholesky(const SparseSymMatrix& S);

  SparseMatrix lower_;
  double shift_ = 0.0;
};

/// IC(0). On breakdown retries with S + α Diag(S) for α = 1e-3, 2e-3, 4e-3,
/// 8e-3, then throws DecompositionFailed.
IncompleteCholesky incomplete_cholesky(const SparseSymMatrix& S);

using LinearOperator =
    std::function<void(const Eigen::VectorXd& in, Eigen::VectorXd& out)>;

struct PcgResult {
  /// Best iterate seen (smallest residual).
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;
};

struct PcgOptions {
  double tol = 1e-10;
  int max_iter = 0;  // 0 means dim
  /// Called with (iteration, iterate) after every update; test hook.
  std::function<void(int, const Eigen::VectorXd&)> on_iterate;
};

/// Preconditioned conjugate gradient on an SPD operator. Converged when
/// ‖apply(x) − b‖ ≤ tol·(1 + ‖b‖). `precond` may be null.
PcgResult pcg(const LinearOperator& apply, const Eigen::VectorXd& b,
              const IncompleteCholesky* precond, const PcgOptions& options);

inline LinearOperator as_operator(const SparseSymMatrix& S) {
  return [&S](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    out = S.multiply(in);
  };
}

/// Connected components of the bipartite graph with an edge (i, j) iff
/// V(i, j) > 0. Rows are sources, columns are sinks.
struct ComponentLabels {
  std::vector<int> row_label;
  std::vector<int> col_label;
  int count = 0;
};

ComponentLabels connected_components(const SparseMatrix& V);

}  // namespace sqsn
