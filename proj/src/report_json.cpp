#include "sqsn/report_json.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sqsn {

namespace {

using nlohmann::json;

// JSON has no inf/nan literals; they travel as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double read_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  throw std::invalid_argument("report: bad number '" + s + "'");
}

json config_to_json(const SolverConfig& c) {
  json j;
  j["eps0"] = number(c.eps0);
  j["r"] = number(c.r);
  j["tau"] = number(c.tau);
  j["rho"] = number(c.rho);
  j["mu"] = number(c.mu);
  j["sigma"] = c.sigma ? number(*c.sigma) : json(nullptr);
  j["kappa_p"] = number(c.kappa_p);
  j["kappa_c"] = number(c.kappa_c);
  j["tol"] = number(c.tol);
  j["max_iter"] = c.max_iter;
  j["time_limit_secs"] = number(c.time_limit_secs);
  j["max_linesearch"] = c.max_linesearch;
  j["linear_solver"] = to_string(c.linear_solver);
  return j;
}

SolverConfig config_from_json(const json& j) {
  SolverConfig c;
  c.eps0 = read_number(j.at("eps0"));
  c.r = read_number(j.at("r"));
  c.tau = read_number(j.at("tau"));
  c.rho = read_number(j.at("rho"));
  c.mu = read_number(j.at("mu"));
  if (!j.at("sigma").is_null()) c.sigma = read_number(j.at("sigma"));
  c.kappa_p = read_number(j.at("kappa_p"));
  c.kappa_c = read_number(j.at("kappa_c"));
  c.tol = read_number(j.at("tol"));
  c.max_iter = j.at("max_iter").get<int>();
  c.time_limit_secs = read_number(j.at("time_limit_secs"));
  c.max_linesearch = j.at("max_linesearch").get<int>();
  c.linear_solver = parse_linear_solver(j.at("linear_solver").get<std::string>());
  return c;
}

}  // namespace

std::string to_string(LinearSolverKind kind) {
  switch (kind) {
    case LinearSolverKind::Auto: return "auto";
    case LinearSolverKind::Direct: return "direct";
    case LinearSolverKind::Pcg: return "pcg";
  }
  return "auto";
}

LinearSolverKind parse_linear_solver(const std::string& name) {
  if (name == "auto") return LinearSolverKind::Auto;
  if (name == "direct") return LinearSolverKind::Direct;
  if (name == "pcg") return LinearSolverKind::Pcg;
  throw std::invalid_argument("unknown linear solver '" + name + "'");
}

CliReport make_cli_report(const std::string& problem, const SolveReport& report,
                          const SolverConfig& config) {
  CliReport out;
  out.problem = problem;
  out.status = report.status;
  out.iterations = report.iterations;
  out.eta_p = report.eta_p;
  out.eta_d = report.eta_d;
  out.eta_c = report.eta_c;
  out.eta_g = report.eta_g;
  out.objective_primal = report.objective_primal;
  out.objective_dual = report.objective_dual;
  out.solve_seconds = report.solve_seconds;
  out.nnz_plan = report.nnz_plan;
  out.config = config;
  out.sigma = report.sigma;
  for (const auto& rec : report.log) {
    out.per_iteration.push_back({rec.iter, rec.merit, rec.eps, rec.step, rec.lin_iters});
  }
  return out;
}

json to_json(const CliReport& r) {
  json j;
  j["problem"] = r.problem;
  j["status"] = to_string(r.status);
  j["iterations"] = r.iterations;
  j["eta_p"] = number(r.eta_p);
  j["eta_d"] = number(r.eta_d);
  j["eta_c"] = number(r.eta_c);
  j["eta_g"] = number(r.eta_g);
  j["objective_primal"] = number(r.objective_primal);
  j["objective_dual"] = number(r.objective_dual);
  j["solve_seconds"] = number(r.solve_seconds);
  j["nnz_plan"] = r.nnz_plan;
  json cfg = config_to_json(r.config);
  cfg["sigma_resolved"] = number(r.sigma);
  cfg["scale"] = r.scale;
  cfg["drop_last_row"] = r.drop_last_row;
  j["config"] = std::move(cfg);
  json iters = json::array();
  for (const auto& it : r.per_iteration) {
    iters.push_back({{"iter", it.iter},
                     {"merit", number(it.merit)},
                     {"eps", number(it.eps)},
                     {"step", number(it.step)},
                     {"lin_iters", it.lin_iters}});
  }
  j["per_iteration"] = std::move(iters);
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j;
}

CliReport cli_report_from_json(const json& j) {
  CliReport r;
  r.problem = j.at("problem").get<std::string>();
  const auto status = parse_status(j.at("status").get<std::string>());
  if (!status) throw std::invalid_argument("report: unknown status");
  r.status = *status;
  r.iterations = j.at("iterations").get<int>();
  r.eta_p = read_number(j.at("eta_p"));
  r.eta_d = read_number(j.at("eta_d"));
  r.eta_c = read_number(j.at("eta_c"));
  r.eta_g = read_number(j.at("eta_g"));
  r.objective_primal = read_number(j.at("objective_primal"));
  r.objective_dual = read_number(j.at("objective_dual"));
  r.solve_seconds = read_number(j.at("solve_seconds"));
  r.nnz_plan = j.at("nnz_plan").get<long>();
  const json& cfg = j.at("config");
  r.config = config_from_json(cfg);
  r.sigma = read_number(cfg.at("sigma_resolved"));
  r.scale = cfg.at("scale").get<bool>();
  r.drop_last_row = cfg.at("drop_last_row").get<bool>();
  for (const auto& it : j.at("per_iteration")) {
    r.per_iteration.push_back({it.at("iter").get<int>(), read_number(it.at("merit")),
                               read_number(it.at("eps")), read_number(it.at("step")),
                               it.at("lin_iters").get<int>()});
  }
  if (j.contains("extra")) r.extra = j.at("extra");
  return r;
}

std::string dump_report(const CliReport& report) { return to_json(report).dump(2) + "\n"; }

}  // namespace sqsn
