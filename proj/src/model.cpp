#include "sqsn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sqsn/linalg.hpp"
#include "sqsn/smoothing.hpp"

namespace sqsn {

namespace {

constexpr double kMassTolerance = 1e-12;

void check_distribution(const Eigen::VectorXd& v, const char* what) {
  if (v.size() == 0) throw std::invalid_argument(std::string(what) + ": empty distribution");
  if (!v.allFinite() || (v.array() <= 0.0).any()) {
    throw std::invalid_argument(std::string(what) +
                                ": entries must be finite and strictly positive");
  }
  if (std::abs(v.sum() - 1.0) > kMassTolerance) {
    throw std::invalid_argument(std::string(what) + ": mass must sum to 1");
  }
}

void check_cost(const Eigen::MatrixXd& c, const char* what) {
  if (!c.allFinite() || (c.array() < 0.0).any()) {
    throw std::invalid_argument(std::string(what) + ": costs must be finite and nonnegative");
  }
}

void check_size(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + ": expected length " + std::to_string(want) +
                            ", got " + std::to_string(got));
  }
}

template <class Problem>
SmoothedEvaluation evaluate_impl(const Problem& problem, const SmoothingParams& params,
                                 double eps, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y) {
  SmoothedEvaluation ev;
  ev.eps = eps;
  ev.w = apply_At(problem, y);
  ev.w = x + params.sigma * (ev.w - problem.cost_scaled);

  ev.primal_residual = apply_A(problem, x);
  ev.primal_residual += params.kappa_p * eps * y - problem.rhs_scaled;

  const double ck = 1.0 + params.kappa_c * eps;
  ev.comp_residual.resize(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    ev.comp_residual[i] = ck * x[i] - huber_eval(eps, ev.w[i]);
  }
  ev.merit = eps * eps + ev.primal_residual.squaredNorm() + ev.comp_residual.squaredNorm();
  return ev;
}

template <class Problem>
KktMetrics kkt_impl(const Problem& problem, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const Eigen::VectorXd& c = problem.cost;
  const Eigen::VectorXd& d = problem.rhs;
  const Eigen::VectorXd z = c - apply_At(problem, y);

  KktMetrics k;
  k.eta_p = (apply_A(problem, x) - d).norm() / (1.0 + d.norm());
  // z is reconstructed from y, so Aᵀy + z − c vanishes identically.
  k.eta_d = 0.0;
  const Eigen::VectorXd proj = (x - z).cwiseMax(0.0);
  k.eta_c = (x - proj).norm() / (1.0 + x.norm() + z.norm());
  k.objective_primal = c.dot(x);
  k.objective_dual = d.dot(y);
  k.eta_g = std::abs(k.objective_primal - k.objective_dual) /
            (1.0 + std::abs(k.objective_primal) + std::abs(k.objective_dual));
  return k;
}

}  // namespace

void LinearData::apply_scaling(bool enabled) {
  scale_c = 1.0;
  scale_d = 1.0;
  if (enabled) {
    const double nc = cost.norm();
    const double nd = rhs.norm();
    if (nc > 0.0) scale_c = nc;
    if (nd > 0.0) scale_d = nd;
  }
  cost_scaled = cost / scale_c;
  rhs_scaled = rhs / scale_d;
}

OtProblem OtProblem::create(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                            const Eigen::VectorXd& b, const OtOptions& options) {
  check_size(cost.rows(), a.size(), "OtProblem cost rows");
  check_size(cost.cols(), b.size(), "OtProblem cost cols");
  check_distribution(a, "OtProblem a");
  check_distribution(b, "OtProblem b");
  check_cost(cost, "OtProblem");

  OtProblem p;
  p.m = static_cast<int>(a.size());
  p.n = static_cast<int>(b.size());
  p.a = a;
  p.b = b;
  p.drop_last_row = options.drop_last_row;
  p.cost = Eigen::Map<const Eigen::VectorXd>(cost.data(), cost.size());
  p.rhs.resize(p.dual_dim());
  p.rhs.head(p.m) = a;
  p.rhs.tail(p.dual_dim() - p.m) = b.head(p.dual_dim() - p.m);
  p.apply_scaling(options.scale);
  return p;
}

WbProblem WbProblem::create(const std::vector<Eigen::MatrixXd>& distances,
                            const std::vector<Eigen::VectorXd>& marginals,
                            const Eigen::VectorXd& weights, bool scale) {
  const auto count = distances.size();
  if (count == 0) throw std::invalid_argument("WbProblem: no distributions");
  check_size(static_cast<Eigen::Index>(marginals.size()), static_cast<Eigen::Index>(count),
             "WbProblem marginals");
  check_size(weights.size(), static_cast<Eigen::Index>(count), "WbProblem weights");
  if ((weights.array() <= 0.0).any() || std::abs(weights.sum() - 1.0) > kMassTolerance) {
    throw std::invalid_argument("WbProblem: weights must be positive and sum to 1");
  }

  WbProblem p;
  p.num_dists = static_cast<int>(count);
  p.m = static_cast<int>(distances.front().rows());
  p.weights = weights;
  int x_off = 0;
  int y1_off = 0;
  for (std::size_t t = 0; t < count; ++t) {
    check_size(distances[t].rows(), p.m, "WbProblem distance rows");
    check_size(distances[t].cols(), marginals[t].size(), "WbProblem distance cols");
    check_distribution(marginals[t], "WbProblem marginal");
    check_cost(distances[t], "WbProblem");
    const int nt = static_cast<int>(marginals[t].size());
    p.n.push_back(nt);
    p.marginals.push_back(marginals[t]);
    p.plan_offset.push_back(x_off);
    p.y1_offset.push_back(y1_off);
    x_off += p.m * nt;
    y1_off += nt;
  }
  p.weight_offset = x_off;
  for (int t = 0; t < p.num_dists; ++t) p.y2_offset.push_back(y1_off + t * p.m);

  p.cost = Eigen::VectorXd::Zero(p.primal_dim());
  p.rhs = Eigen::VectorXd::Zero(p.dual_dim());
  for (int t = 0; t < p.num_dists; ++t) {
    const Eigen::MatrixXd weighted = weights[t] * distances[t];
    p.cost.segment(p.plan_offset[t], p.m * p.n[t]) =
        Eigen::Map<const Eigen::VectorXd>(weighted.data(), weighted.size());
    p.rhs.segment(p.y1_offset[t], p.n[t]) = marginals[t];
  }
  p.apply_scaling(scale);
  return p;
}

void SolverConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("SolverConfig: ") + msg);
  };
  require(eps0 > 0.0, "eps0 must be positive");
  require(r > 0.0 && r < 1.0, "r must lie in (0,1)");
  require(delta() < 1.0, "r*eps0 must be < 1");
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0,1]");
  require(rho > 0.0 && rho < 1.0, "rho must lie in (0,1)");
  require(mu > 0.0 && mu < 0.5, "mu must lie in (0,1/2)");
  require(!sigma || *sigma > 0.0, "sigma must be positive");
  require(kappa_p > 0.0 && kappa_c > 0.0, "kappa_p and kappa_c must be positive");
  require(tol > 0.0, "tol must be positive");
  require(max_iter >= 0, "max_iter must be nonnegative");
  require(max_linesearch >= 0, "max_linesearch must be nonnegative");
}

double resolve_sigma(const SolverConfig& config, const LinearData& data) {
  if (config.sigma) return *config.sigma;
  const double nc = data.cost.norm();
  // An all-zero cost gives σ = 0, which would decouple x from y.
  return nc > 0.0 ? std::min(1e3, nc) : 1.0;
}

SmoothingParams SmoothingParams::from(const SolverConfig& config, const LinearData& data) {
  return {resolve_sigma(config, data), config.kappa_p, config.kappa_c};
}

Eigen::VectorXd apply_A(const OtProblem& p, const Eigen::VectorXd& x) {
  check_size(x.size(), p.primal_dim(), "apply_A");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.dual_dim());
  const int m = p.m;
  for (int j = 0; j < p.n; ++j) {
    const double* col = x.data() + static_cast<Eigen::Index>(j) * m;
    double col_sum = 0.0;
    for (int i = 0; i < m; ++i) {
      out[i] += col[i];
      col_sum += col[i];
    }
    if (m + j < p.dual_dim()) out[m + j] = col_sum;
  }
  return out;
}

Eigen::VectorXd apply_At(const OtProblem& p, const Eigen::VectorXd& y) {
  check_size(y.size(), p.dual_dim(), "apply_At");
  Eigen::VectorXd out(p.primal_dim());
  const int m = p.m;
  for (int j = 0; j < p.n; ++j) {
    const double g = m + j < p.dual_dim() ? y[m + j] : 0.0;
    double* col = out.data() + static_cast<Eigen::Index>(j) * m;
    for (int i = 0; i < m; ++i) col[i] = y[i] + g;
  }
  return out;
}

Eigen::VectorXd apply_A(const WbProblem& p, const Eigen::VectorXd& x) {
  check_size(x.size(), p.primal_dim(), "apply_A");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p.dual_dim());
  const int m = p.m;
  const double* w = x.data() + p.weight_offset;
  for (int t = 0; t < p.num_dists; ++t) {
    const double* plan = x.data() + p.plan_offset[t];
    double* col_sums = out.data() + p.y1_offset[t];
    double* row_sums = out.data() + p.y2_offset[t];
    for (int j = 0; j < p.n[t]; ++j) {
      const double* col = plan + static_cast<Eigen::Index>(j) * m;
      double s = 0.0;
      for (int i = 0; i < m; ++i) {
        row_sums[i] += col[i];
        s += col[i];
      }
      col_sums[j] = s;
    }
    for (int i = 0; i < m; ++i) row_sums[i] -= w[i];
  }
  return out;
}

Eigen::VectorXd apply_At(const WbProblem& p, const Eigen::VectorXd& y) {
  check_size(y.size(), p.dual_dim(), "apply_At");
  Eigen::VectorXd out(p.primal_dim());
  const int m = p.m;
  double* w = out.data() + p.weight_offset;
  std::fill(w, w + m, 0.0);
  for (int t = 0; t < p.num_dists; ++t) {
    const double* y1 = y.data() + p.y1_offset[t];
    const double* y2 = y.data() + p.y2_offset[t];
    double* plan = out.data() + p.plan_offset[t];
    for (int j = 0; j < p.n[t]; ++j) {
      double* col = plan + static_cast<Eigen::Index>(j) * m;
      for (int i = 0; i < m; ++i) col[i] = y1[j] + y2[i];
    }
    for (int i = 0; i < m; ++i) w[i] -= y2[i];
  }
  return out;
}

double SmoothedEvaluation::norm() const { return std::sqrt(merit); }

Eigen::VectorXd SmoothedEvaluation::stacked() const {
  Eigen::VectorXd out(1 + primal_residual.size() + comp_residual.size());
  out << eps, primal_residual, comp_residual;
  return out;
}

SmoothedEvaluation evaluate_smoothed(const OtProblem& problem, const SmoothingParams& params,
                                     double eps, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& y) {
  return evaluate_impl(problem, params, eps, x, y);
}

SmoothedEvaluation evaluate_smoothed(const WbProblem& problem, const SmoothingParams& params,
                                     double eps, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& y) {
  return evaluate_impl(problem, params, eps, x, y);
}

Eigen::VectorXd smoothed_map(const OtProblem& problem, const SolverConfig& config, double eps,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto ev = evaluate_smoothed(problem, SmoothingParams::from(config, problem), eps, x, y);
  Eigen::VectorXd out(ev.primal_residual.size() + ev.comp_residual.size());
  out << ev.primal_residual, ev.comp_residual;
  return out;
}

Eigen::VectorXd smoothed_map(const WbProblem& problem, const SolverConfig& config, double eps,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto ev = evaluate_smoothed(problem, SmoothingParams::from(config, problem), eps, x, y);
  Eigen::VectorXd out(ev.primal_residual.size() + ev.comp_residual.size());
  out << ev.primal_residual, ev.comp_residual;
  return out;
}

EhatMerit ehat_and_merit(const OtProblem& problem, const SolverConfig& config, double eps,
                         const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto ev = evaluate_smoothed(problem, SmoothingParams::from(config, problem), eps, x, y);
  return {ev.stacked(), ev.merit};
}

EhatMerit ehat_and_merit(const WbProblem& problem, const SolverConfig& config, double eps,
                         const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto ev = evaluate_smoothed(problem, SmoothingParams::from(config, problem), eps, x, y);
  return {ev.stacked(), ev.merit};
}

double zeta(const SolverConfig& config, double ehat_norm) {
  return config.r * std::min(1.0, std::pow(ehat_norm, 1.0 + config.tau));
}

double KktMetrics::eta_max() const { return std::max({eta_p, eta_d, eta_c}); }

double KktMetrics::worst() const { return std::max(eta_max(), eta_g); }

KktMetrics kkt_metrics(const OtProblem& problem, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& y) {
  return kkt_impl(problem, x, y);
}

KktMetrics kkt_metrics(const WbProblem& problem, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& y) {
  return kkt_impl(problem, x, y);
}

PrimalDual unscale_solution(const LinearData& data, const Eigen::VectorXd& x_scaled,
                            const Eigen::VectorXd& y_scaled) {
  return {data.scale_d * x_scaled, data.scale_c * y_scaled};
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::EpsFloor: return "EpsFloor";
    case SolveStatus::MaxIter: return "MaxIter";
    case SolveStatus::TimeLimit: return "TimeLimit";
    case SolveStatus::LineSearchFail: return "LineSearchFail";
    case SolveStatus::LinearSolveFailed: return "LinearSolveFailed";
  }
  return "Unknown";
}

std::optional<SolveStatus> parse_status(const std::string& name) {
  for (auto s : {SolveStatus::Optimal, SolveStatus::EpsFloor, SolveStatus::MaxIter,
                 SolveStatus::TimeLimit, SolveStatus::LineSearchFail,
                 SolveStatus::LinearSolveFailed}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::string to_string(LinearPath path) {
  switch (path) {
    case LinearPath::None: return "none";
    case LinearPath::Components: return "components";
    case LinearPath::Monolithic: return "monolithic";
    case LinearPath::Pcg: return "pcg";
    case LinearPath::Diagonal: return "diagonal";
  }
  return "unknown";
}

TransportPlan extract_plan(const double* values, int rows, int cols, double relative_drop) {
  TransportPlan plan{rows, cols, {}};
  double largest = 0.0;
  const Eigen::Index size = static_cast<Eigen::Index>(rows) * cols;
  for (Eigen::Index k = 0; k < size; ++k) largest = std::max(largest, values[k]);
  const double cutoff = relative_drop * largest;
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      const double v = values[i + static_cast<Eigen::Index>(j) * rows];
      if (v > cutoff) plan.entries.push_back({i, j, v});
    }
  }
  return plan;
}

}  // namespace sqsn
