#include "sqsn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

namespace sqsn {

SparseSymMatrix::SparseSymMatrix(SparseMatrix lower) : lower_(std::move(lower)) {
  if (lower_.rows() != lower_.cols() || lower_.rows() == 0) {
    throw DimensionMismatch("SparseSymMatrix: matrix must be square and nonempty");
  }
  lower_.makeCompressed();
  const int n = dim();
  for (int j = 0; j < n; ++j) {
    const int begin = lower_.outerIndexPtr()[j];
    const int end = lower_.outerIndexPtr()[j + 1];
    if (begin == end || lower_.innerIndexPtr()[begin] != j) {
      throw std::invalid_argument("SparseSymMatrix: missing diagonal entry in column " +
                                  std::to_string(j));
    }
    if (!std::isfinite(lower_.valuePtr()[begin])) {
      throw std::invalid_argument("SparseSymMatrix: non-finite diagonal entry");
    }
  }
}

SparseSymMatrix SparseSymMatrix::from_triplets(int dim, std::span<const Triplet> entries) {
  std::vector<Triplet> lower;
  lower.reserve(entries.size() + static_cast<std::size_t>(dim));
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= dim || t.col() < 0 || t.col() >= dim) {
      throw DimensionMismatch("SparseSymMatrix: triplet index out of range");
    }
    if (t.row() >= t.col()) {
      lower.push_back(t);
    } else {
      lower.emplace_back(t.col(), t.row(), t.value());
    }
  }
  for (int i = 0; i < dim; ++i) {
    lower.emplace_back(i, i, 0.0);
  }
  SparseMatrix mat(dim, dim);
  mat.setFromTriplets(lower.begin(), lower.end());
  return SparseSymMatrix(std::move(mat));
}

SparseSymMatrix SparseSymMatrix::from_dense(const Eigen::MatrixXd& dense) {
  if (dense.rows() != dense.cols()) {
    throw DimensionMismatch("SparseSymMatrix: dense input must be square");
  }
  std::vector<Triplet> entries;
  for (int j = 0; j < dense.cols(); ++j) {
    for (int i = j; i < dense.rows(); ++i) {
      if (i == j || dense(i, j) != 0.0) entries.emplace_back(i, j, dense(i, j));
    }
  }
  return from_triplets(static_cast<int>(dense.rows()), entries);
}

Eigen::VectorXd SparseSymMatrix::diagonal() const {
  Eigen::VectorXd d(dim());
  for (int j = 0; j < dim(); ++j) {
    d[j] = lower_.valuePtr()[lower_.outerIndexPtr()[j]];
  }
  return d;
}

Eigen::VectorXd SparseSymMatrix::multiply(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) {
    throw DimensionMismatch("SparseSymMatrix::multiply: dimension mismatch");
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(dim());
  const int* outer = lower_.outerIndexPtr();
  const int* inner = lower_.innerIndexPtr();
  const double* val = lower_.valuePtr();
  for (int j = 0; j < dim(); ++j) {
    const double xj = x[j];
    double acc = val[outer[j]] * xj;
    for (int p = outer[j] + 1; p < outer[j + 1]; ++p) {
      const int i = inner[p];
      y[i] += val[p] * xj;
      acc += val[p] * x[i];
    }
    y[j] += acc;
  }
  return y;
}

Eigen::MatrixXd SparseSymMatrix::to_dense() const {
  Eigen::MatrixXd dense = Eigen::MatrixXd(lower_);
  dense.triangularView<Eigen::StrictlyUpper>() = dense.transpose();
  return dense;
}

SparseSymMatrix SparseSymMatrix::diagonal_shifted(double alpha) const {
  SparseMatrix shifted = lower_;
  for (int j = 0; j < dim(); ++j) {
    shifted.valuePtr()[shifted.outerIndexPtr()[j]] *= (1.0 + alpha);
  }
  return SparseSymMatrix(std::move(shifted));
}

CholFactor sparse_cholesky(const SparseSymMatrix& S) {
  using Llt = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
  Llt llt;
  llt.compute(S.lower());
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("sparse_cholesky: nonpositive pivot");
  }
  const double max_diag = S.diagonal().cwiseAbs().maxCoeff();
  const double floor = kPivotFloor * max_diag;

  CholFactor factor;
  factor.dim_ = S.dim();
  factor.lower_ = llt.matrixL();
  factor.lower_.makeCompressed();
  for (int j = 0; j < factor.dim_; ++j) {
    const double ljj = factor.lower_.valuePtr()[factor.lower_.outerIndexPtr()[j]];
    if (!(ljj * ljj > floor)) {
      throw NotPositiveDefinite("sparse_cholesky: pivot below floor at step " +
                                std::to_string(j));
    }
  }
  factor.perm_ = llt.permutationP().indices();
  return factor;
}

Eigen::VectorXd CholFactor::solve(const Eigen::VectorXd& b) const {
  if (b.size() != dim_) {
    throw DimensionMismatch("CholFactor::solve: dimension mismatch");
  }
  Eigen::VectorXd pb(dim_);
  for (int i = 0; i < dim_; ++i) pb[perm_[i]] = b[i];
  lower_.triangularView<Eigen::Lower>().solveInPlace(pb);
  lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(pb);
  Eigen::VectorXd x(dim_);
  for (int i = 0; i < dim_; ++i) x[i] = pb[perm_[i]];
  return x;
}

Eigen::VectorXd solve_refined(const SparseSymMatrix& S, const CholFactor& factor,
                              const Eigen::VectorXd& b) {
  Eigen::VectorXd x = factor.solve(b);
  const Eigen::VectorXd r = b - S.multiply(x);
  x += factor.solve(r);
  return x;
}

namespace {

// Returns false on pivot breakdown. `lower` must be compressed with sorted
// row indices and the diagonal first in every column.
bool ic0_in_place(SparseMatrix& lower) {
  const int n = static_cast<int>(lower.rows());
  const int* outer = lower.outerIndexPtr();
  const int* inner = lower.innerIndexPtr();
  double* val = lower.valuePtr();
  std::vector<int> position(n, -1);

  for (int k = 0; k < n; ++k) {
    const double pivot = val[outer[k]];
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return false;
    const double lkk = std::sqrt(pivot);
    val[outer[k]] = lkk;
    for (int p = outer[k] + 1; p < outer[k + 1]; ++p) val[p] /= lkk;

    for (int p = outer[k] + 1; p < outer[k + 1]; ++p) {
      const int j = inner[p];
      const double ljk = val[p];
      for (int q = outer[j]; q < outer[j + 1]; ++q) position[inner[q]] = q;
      for (int p2 = p; p2 < outer[k + 1]; ++p2) {
        const int pos = position[inner[p2]];
        if (pos >= 0) val[pos] -= val[p2] * ljk;
      }
      for (int q = outer[j]; q < outer[j + 1]; ++q) position[inner[q]] = -1;
    }
  }
  return true;
}

}  // namespace

IncompleteCholesky incomplete_cholesky(const SparseSymMatrix& S) {
  constexpr double kInitialShift = 1e-3;
  constexpr int kDoublings = 3;

  IncompleteCholesky ic;
  ic.lower_ = S.lower();
  if (ic0_in_place(ic.lower_)) return ic;

  double alpha = kInitialShift;
  for (int attempt = 0; attempt <= kDoublings; ++attempt, alpha *= 2.0) {
    ic.lower_ = S.diagonal_shifted(alpha).lower();
    if (ic0_in_place(ic.lower_)) {
      ic.shift_ = alpha;
      return ic;
    }
  }
  throw DecompositionFailed("incomplete_cholesky: breakdown after diagonal shifts");
}

Eigen::VectorXd IncompleteCholesky::apply(const Eigen::VectorXd& r) const {
  Eigen::VectorXd z = r;
  lower_.triangularView<Eigen::Lower>().solveInPlace(z);
  lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
  return z;
}

PcgResult pcg(const LinearOperator& apply, const Eigen::VectorXd& b,
              const IncompleteCholesky* precond, const PcgOptions& options) {
  const Eigen::Index n = b.size();
  const int max_iter = options.max_iter > 0 ? options.max_iter : static_cast<int>(n);
  const double target = options.tol * (1.0 + b.norm());

  PcgResult result;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = b;
  double rnorm = r.norm();
  result.x = x;
  result.residual_norm = rnorm;
  if (rnorm <= target) {
    result.converged = true;
    return result;
  }

  auto precondition = [&](const Eigen::VectorXd& v) {
    return precond != nullptr ? precond->apply(v) : v;
  };
  Eigen::VectorXd z = precondition(r);
  Eigen::VectorXd p = z;
  Eigen::VectorXd q(n);
  double rz = r.dot(z);

  for (int it = 1; it <= max_iter; ++it) {
    apply(p, q);
    const double pq = p.dot(q);
    if (!(pq > 0.0)) break;  // operator not SPD along p, or stagnation
    const double alpha = rz / pq;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    rnorm = r.norm();
    result.iterations = it;
    if (options.on_iterate) options.on_iterate(it, x);
    if (rnorm < result.residual_norm) {
      result.residual_norm = rnorm;
      result.x = x;
    }
    if (rnorm <= target) {
      result.converged = true;
      return result;
    }
    z = precondition(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return result;
}

ComponentLabels connected_components(const SparseMatrix& V) {
  const int m = static_cast<int>(V.rows());
  const int n = static_cast<int>(V.cols());
  std::vector<int> parent(static_cast<std::size_t>(m + n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int u) {
    while (parent[u] != u) {
      parent[u] = parent[parent[u]];
      u = parent[u];
    }
    return u;
  };
  for (int j = 0; j < n; ++j) {
    for (SparseMatrix::InnerIterator it(V, j); it; ++it) {
      if (!(it.value() > 0.0)) continue;
      const int a = find(static_cast<int>(it.row()));
      const int b = find(m + j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }

  ComponentLabels labels;
  labels.row_label.resize(m);
  labels.col_label.resize(n);
  std::vector<int> label_of_root(static_cast<std::size_t>(m + n), -1);
  for (int u = 0; u < m + n; ++u) {
    const int root = find(u);
    if (label_of_root[root] < 0) label_of_root[root] = labels.count++;
    if (u < m) {
      labels.row_label[u] = label_of_root[root];
    } else {
      labels.col_label[u - m] = label_of_root[root];
    }
  }
  return labels;
}

}  // namespace sqsn
