#include "sqsn/oracle.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/LU>

namespace sqsn {

std::string to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "Optimal";
    case LpStatus::Infeasible: return "Infeasible";
    case LpStatus::Unbounded: return "Unbounded";
  }
  return "unknown";
}

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-11;

class Tableau {
 public:
  Tableau(const Eigen::MatrixXd& A, const Eigen::VectorXd& b)
      : rows_(static_cast<int>(A.rows())), vars_(static_cast<int>(A.cols())) {
    T_ = Eigen::MatrixXd::Zero(rows_, vars_ + rows_ + 1);
    for (int i = 0; i < rows_; ++i) {
      const double sign = b[i] < 0.0 ? -1.0 : 1.0;
      T_.row(i).head(vars_) = sign * A.row(i);
      T_(i, vars_ + i) = 1.0;
      T_(i, rhs_col()) = sign * b[i];
    }
    basis_.resize(static_cast<std::size_t>(rows_));
    for (int i = 0; i < rows_; ++i) basis_[i] = vars_ + i;
    d_.resize(T_.cols());
  }

  int rhs_col() const { return vars_ + rows_; }
  bool is_artificial(int j) const { return j >= vars_; }
  const std::vector<int>& basis() const { return basis_; }
  double objective() const { return -d_[rhs_col()]; }
  int pivots() const { return pivots_; }

  void set_costs(const Eigen::VectorXd& full_cost) {
    d_.setZero();
    d_.head(full_cost.size()) = full_cost;
    for (int i = 0; i < rows_; ++i) d_ -= full_cost[basis_[i]] * T_.row(i).transpose();
  }

  // Runs Bland's rule on the current costs; returns false when unbounded.
  bool optimize(bool allow_artificial) {
    const int limit = allow_artificial ? rhs_col() : vars_;
    while (true) {
      int q = -1;
      for (int j = 0; j < limit; ++j) {
        if (d_[j] < -kCostTol) {
          q = j;
          break;
        }
      }
      if (q < 0) return true;
      int p = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < rows_; ++i) {
        const double a = T_(i, q);
        if (a <= kPivotTol) continue;
        const double ratio = T_(i, rhs_col()) / a;
        if (ratio < best - 1e-14 || (std::abs(ratio - best) <= 1e-14 && basis_[i] < basis_[p])) {
          best = ratio;
          p = i;
        }
      }
      if (p < 0) return false;
      pivot(p, q);
    }
  }

  // Moves basic artificials out where possible; returns rows that are
  // linear combinations of the others.
  std::vector<bool> drive_out_artificials() {
    std::vector<bool> redundant(static_cast<std::size_t>(rows_), false);
    for (int i = 0; i < rows_; ++i) {
      if (!is_artificial(basis_[i])) continue;
      int q = -1;
      double largest = kPivotTol;
      for (int j = 0; j < vars_; ++j) {
        if (std::abs(T_(i, j)) > largest) {
          largest = std::abs(T_(i, j));
          q = j;
        }
      }
      if (q >= 0) {
        pivot(i, q);
      } else {
        redundant[i] = true;
      }
    }
    return redundant;
  }

 private:
  void pivot(int p, int q) {
    T_.row(p) /= T_(p, q);
    for (int i = 0; i < rows_; ++i) {
      if (i != p && T_(i, q) != 0.0) T_.row(i) -= T_(i, q) * T_.row(p);
    }
    d_ -= d_[q] * T_.row(p).transpose();
    basis_[p] = q;
    ++pivots_;
  }

  int rows_;
  int vars_;
  Eigen::MatrixXd T_;
  Eigen::VectorXd d_;
  std::vector<int> basis_;
  int pivots_ = 0;
};

}  // namespace

LpSolution simplex_solve(const DenseLp& lp) {
  const int rows = static_cast<int>(lp.A.rows());
  const int vars = static_cast<int>(lp.A.cols());
  if (vars > kOracleMaxVariables) {
    throw SizeLimit("simplex_solve: " + std::to_string(vars) + " variables exceed the cap of " +
                    std::to_string(kOracleMaxVariables));
  }
  if (lp.b.size() != rows || lp.c.size() != vars) {
    throw std::invalid_argument("simplex_solve: inconsistent dimensions");
  }
  if (!lp.A.allFinite() || !lp.b.allFinite() || !lp.c.allFinite()) {
    throw std::invalid_argument("simplex_solve: non-finite data");
  }

  LpSolution sol;
  Tableau tab(lp.A, lp.b);

  Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(vars + rows);
  phase1.tail(rows).setOnes();
  tab.set_costs(phase1);
  tab.optimize(true);
  if (tab.objective() > 1e-9 * (1.0 + lp.b.lpNorm<1>())) {
    sol.status = LpStatus::Infeasible;
    sol.pivots = tab.pivots();
    return sol;
  }
  const std::vector<bool> redundant = tab.drive_out_artificials();

  Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(vars + rows);
  phase2.head(vars) = lp.c;
  tab.set_costs(phase2);
  if (!tab.optimize(false)) {
    sol.status = LpStatus::Unbounded;
    sol.pivots = tab.pivots();
    return sol;
  }

  // Recompute the vertex and duals from the final basis on the original data.
  std::vector<int> kept_rows;
  std::vector<int> basic_cols;
  for (int i = 0; i < rows; ++i) {
    if (redundant[i]) continue;
    kept_rows.push_back(i);
    basic_cols.push_back(tab.basis()[i]);
  }
  const int k = static_cast<int>(kept_rows.size());
  Eigen::MatrixXd B(k, k);
  Eigen::VectorXd b_kept(k);
  Eigen::VectorXd c_basic(k);
  for (int r = 0; r < k; ++r) {
    b_kept[r] = lp.b[kept_rows[r]];
    for (int s = 0; s < k; ++s) B(r, s) = lp.A(kept_rows[r], basic_cols[s]);
  }
  for (int s = 0; s < k; ++s) c_basic[s] = lp.c[basic_cols[s]];
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
  const Eigen::VectorXd xb = lu.solve(b_kept);
  const Eigen::VectorXd yk = lu.transpose().solve(c_basic);

  sol.status = LpStatus::Optimal;
  sol.x = Eigen::VectorXd::Zero(vars);
  for (int s = 0; s < k; ++s) sol.x[basic_cols[s]] = std::max(0.0, xb[s]);
  sol.y = Eigen::VectorXd::Zero(rows);
  for (int r = 0; r < k; ++r) sol.y[kept_rows[r]] = yk[r];
  sol.objective = lp.c.dot(sol.x);
  sol.pivots = tab.pivots();
  return sol;
}

DenseLp dense_ot_lp(const OtProblem& p) {
  const int rows = p.m + p.n - (p.drop_last_row ? 1 : 0);
  DenseLp lp;
  lp.A = Eigen::MatrixXd::Zero(rows, p.primal_dim());
  lp.b.resize(rows);
  lp.b.head(p.m) = p.a;
  lp.b.tail(rows - p.m) = p.b.head(rows - p.m);
  for (int j = 0; j < p.n; ++j) {
    for (int i = 0; i < p.m; ++i) {
      const int col = i + j * p.m;
      lp.A(i, col) = 1.0;
      if (p.m + j < rows) lp.A(p.m + j, col) = 1.0;
    }
  }
  lp.c = p.cost;
  return lp;
}

DenseLp dense_wb_lp(const WbProblem& p) {
  DenseLp lp;
  lp.A = Eigen::MatrixXd::Zero(p.dual_dim(), p.primal_dim());
  lp.b = p.rhs;
  lp.c = p.cost;
  const int m = p.m;
  for (int t = 0; t < p.num_dists; ++t) {
    for (int j = 0; j < p.n[t]; ++j) {
      for (int i = 0; i < m; ++i) {
        const int col = p.plan_offset[t] + i + j * m;
        lp.A(p.y1_offset[t] + j, col) = 1.0;
        lp.A(p.y2_offset[t] + i, col) = 1.0;
      }
    }
    for (int i = 0; i < m; ++i) lp.A(p.y2_offset[t] + i, p.weight_offset + i) = -1.0;
  }
  return lp;
}

OtReference ot_reference(const OtProblem& problem) {
  if (problem.m * problem.n > 200) throw SizeLimit("ot_reference: m*n exceeds 200");
  const LpSolution sol = simplex_solve(dense_ot_lp(problem));
  if (sol.status != LpStatus::Optimal) {
    throw std::runtime_error("ot_reference: LP reported " + to_string(sol.status));
  }
  OtReference ref;
  ref.objective = sol.objective;
  ref.plan = Eigen::Map<const Eigen::MatrixXd>(sol.x.data(), problem.m, problem.n);
  ref.y = sol.y;
  return ref;
}

WbReference wb_reference(const WbProblem& problem) {
  if (problem.primal_dim() > kOracleMaxVariables) {
    throw SizeLimit("wb_reference: more than 500 variables");
  }
  const LpSolution sol = simplex_solve(dense_wb_lp(problem));
  if (sol.status != LpStatus::Optimal) {
    throw std::runtime_error("wb_reference: LP reported " + to_string(sol.status));
  }
  WbReference ref;
  ref.objective = sol.objective;
  ref.weights = sol.x.tail(problem.m);
  for (int t = 0; t < problem.num_dists; ++t) {
    ref.plans.emplace_back(
        Eigen::Map<const Eigen::MatrixXd>(sol.x.data() + problem.plan_offset[t], problem.m, problem.n[t]));
  }
  return ref;
}

}  // namespace sqsn
