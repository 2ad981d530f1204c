#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sqsn/model.hpp"

namespace sqsn {

struct IterationSummary {
  int iter = 0;
  double merit = 0.0;
  double eps = 0.0;
  double step = 0.0;
  int lin_iters = 0;

  bool operator==(const IterationSummary&) const = default;
};

/// Machine-readable form of a SolveReport.
struct CliReport {
  std::string problem;  // "ot" or "wb"
  SolveStatus status = SolveStatus::MaxIter;
  int iterations = 0;
  double eta_p = 0.0;
  double eta_d = 0.0;
  double eta_c = 0.0;
  double eta_g = 0.0;
  double objective_primal = 0.0;
  double objective_dual = 0.0;
  double solve_seconds = 0.0;
  long nnz_plan = 0;
  SolverConfig config;
  double sigma = 0.0;
  bool scale = true;
  bool drop_last_row = true;
  std::vector<IterationSummary> per_iteration;
  /// Free-form additions (e.g. oracle deltas, cost normalization).
  nlohmann::json extra = nlohmann::json::object();
};

CliReport make_cli_report(const std::string& problem, const SolveReport& report,
                          const SolverConfig& config);

nlohmann::json to_json(const CliReport& report);
CliReport cli_report_from_json(const nlohmann::json& j);

std::string to_string(LinearSolverKind kind);
LinearSolverKind parse_linear_solver(const std::string& name);

/// Pretty-printed JSON; doubles use the shortest text that reads back exactly.
std::string dump_report(const CliReport& report);

}  // namespace sqsn
