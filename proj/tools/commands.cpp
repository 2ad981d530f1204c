#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "sqsn/ingest.hpp"
#include "sqsn/oracle.hpp"
#include "sqsn/ot_solver.hpp"
#include "sqsn/report_json.hpp"
#include "sqsn/wb_solver.hpp"

namespace sqsn::cli {

namespace {

struct SolverFlags {
  double tol = 1e-8;
  int max_iter = 1000;
  double time_limit = 86400.0;
  bool no_scale = false;
  std::string linear_solver = "auto";
  std::string json_path;
  bool verify = false;

  SolverConfig config() const {
    SolverConfig c;
    c.tol = tol;
    c.max_iter = max_iter;
    c.time_limit_secs = time_limit;
    c.linear_solver = parse_linear_solver(linear_solver);
    return c;
  }
};

void add_solver_flags(CLI::App& cmd, SolverFlags& f) {
  cmd.add_option("--tol", f.tol, "stopping tolerance on the KKT residues")->capture_default_str();
  cmd.add_option("--max-iter", f.max_iter, "iteration cap")->capture_default_str();
  cmd.add_option("--time-limit", f.time_limit, "wall-clock cap in seconds")->capture_default_str();
  cmd.add_flag("--no-scale", f.no_scale, "iterate on unscaled c and d");
  cmd.add_option("--linear-solver", f.linear_solver, "auto, direct or pcg")
      ->check(CLI::IsMember({"auto", "direct", "pcg"}))
      ->capture_default_str();
  cmd.add_option("--json", f.json_path, "write the JSON report here");
  cmd.add_flag("--verify", f.verify, "cross-check against the simplex oracle (small instances)");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("error writing " + path);
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void print_summary(std::ostream& out, const SolveReport& r) {
  out << "status " << to_string(r.status) << "\n"
      << "iterations " << r.iterations << "\n"
      << "objective " << format_double(r.objective_primal) << "\n"
      << std::scientific << std::setprecision(3) << "eta_p " << r.eta_p << "  eta_d " << r.eta_d
      << "  eta_c " << r.eta_c << "  eta_g " << r.eta_g << "\n"
      << std::defaultfloat << "time " << std::fixed << std::setprecision(3) << r.solve_seconds
      << " s\n"
      << std::defaultfloat;
}

int exit_for(SolveStatus s) { return s == SolveStatus::Optimal ? kExitOptimal : kExitNotOptimal; }

double relative_delta(double value, double reference) {
  return std::abs(value - reference) / std::max(1.0, std::abs(reference));
}

Eigen::MatrixXd load_cost_file(const std::string& path, const GridDistribution& a,
                               const GridDistribution& b) {
  const GridDistribution raw = load_grid(path, GridFormat::Csv);
  if (raw.height != a.original_size() || raw.width != b.original_size()) {
    throw std::invalid_argument("cost file must be " + std::to_string(a.original_size()) + " x " +
                                std::to_string(b.original_size()));
  }
  const Eigen::Map<const Eigen::MatrixXd> full(raw.mass.data(), raw.height, raw.width);
  Eigen::MatrixXd cost(a.kept_indices.size(), b.kept_indices.size());
  for (std::size_t j = 0; j < b.kept_indices.size(); ++j) {
    for (std::size_t i = 0; i < a.kept_indices.size(); ++i) {
      cost(i, j) = full(a.kept_indices[i], b.kept_indices[j]);
    }
  }
  return cost;
}

// ---------------------------------------------------------------- ot

struct OtArgs {
  std::string a_path;
  std::string b_path;
  std::string cost_path;
  bool keep_last_row = false;
  std::string plan_out;
  SolverFlags flags;
};

int cmd_ot(const OtArgs& args, std::ostream& out, std::ostream& err) {
  const GridDistribution a = normalize_and_prune(load_grid(args.a_path));
  const GridDistribution b = normalize_and_prune(load_grid(args.b_path));
  OtOptions options;
  options.scale = !args.flags.no_scale;
  options.drop_last_row = !args.keep_last_row;

  OtInstance inst;
  if (args.cost_path.empty()) {
    inst = build_ot_problem(a, b, options);
  } else {
    inst.a = a;
    inst.b = b;
    inst.cost.cost = load_cost_file(args.cost_path, a, b);
    inst.cost.max_raw = 1.0;
    inst.problem = OtProblem::create(inst.cost.cost, a.mass, b.mass, options);
  }

  const SolverConfig config = args.flags.config();
  const SolveReport report = solve_ot(inst.problem, config);
  print_summary(out, report);

  CliReport cli = make_cli_report("ot", report, config);
  cli.scale = options.scale;
  cli.drop_last_row = options.drop_last_row;
  cli.extra["m"] = inst.problem.m;
  cli.extra["n"] = inst.problem.n;
  cli.extra["cost_max"] = inst.cost.max_raw;
  cli.extra["objective_unnormalized"] = report.objective_primal * inst.cost.max_raw;

  if (args.flags.verify) {
    try {
      const OtReference ref = ot_reference(inst.problem);
      const double delta = relative_delta(report.objective_primal, ref.objective);
      out << "oracle objective " << format_double(ref.objective) << "\n"
          << "oracle delta " << std::scientific << std::setprecision(3) << delta
          << std::defaultfloat << "\n";
      cli.extra["oracle_objective"] = ref.objective;
      cli.extra["oracle_delta"] = delta;
    } catch (const SizeLimit& e) {
      err << "verify skipped: " << e.what() << "\n";
    }
  }

  if (!args.plan_out.empty()) {
    std::string text;
    for (const auto& e : report.plans.front().entries) {
      text += std::to_string(a.kept_indices[e.row]) + "," + std::to_string(b.kept_indices[e.col]) +
              "," + format_double(e.value) + "\n";
    }
    write_file(args.plan_out, text);
  }
  if (!args.flags.json_path.empty()) write_file(args.flags.json_path, dump_report(cli));
  return exit_for(report.status);
}

// ---------------------------------------------------------------- wb

struct WbArgs {
  std::vector<std::string> inputs;
  std::string weights = "uniform";
  std::string support;
  std::string bary_out;
  SolverFlags flags;
};

std::pair<int, int> parse_support(const std::string& text) {
  const auto x = text.find_first_of("xX");
  int w = 0;
  int h = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument("");
    std::size_t used_w = 0;
    std::size_t used_h = 0;
    w = std::stoi(text.substr(0, x), &used_w);
    h = std::stoi(text.substr(x + 1), &used_h);
    if (used_w != x || used_h != text.size() - x - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("--support expects WxH, got '" + text + "'");
  }
  if (w <= 0 || h <= 0) throw std::invalid_argument("--support dimensions must be positive");
  return {w, h};
}

Eigen::VectorXd load_weights(const std::string& source, std::size_t count) {
  if (source == "uniform") return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count), 1.0 / count);
  std::ifstream in(source);
  if (!in) throw std::runtime_error("cannot open " + source);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    std::replace(token.begin(), token.end(), ',', ' ');
    std::istringstream parts(token);
    double v = 0.0;
    while (parts >> v) values.push_back(v);
    if (!parts.eof()) throw std::invalid_argument("bad number in weights file " + source);
  }
  if (values.size() != count) {
    throw std::invalid_argument("weights file has " + std::to_string(values.size()) +
                                " entries for " + std::to_string(count) + " inputs");
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(count));
}

int cmd_wb(const WbArgs& args, std::ostream& out, std::ostream& err) {
  const auto [width, height] = parse_support(args.support);
  std::vector<GridDistribution> dists;
  for (const auto& path : args.inputs) dists.push_back(normalize_and_prune(load_grid(path)));
  const Eigen::VectorXd weights = load_weights(args.weights, dists.size());
  const WbInstance inst = build_wb_problem(dists, weights, width, height, !args.flags.no_scale);

  const SolverConfig config = args.flags.config();
  const SolveReport report = solve_wb(inst.problem, config);
  print_summary(out, report);

  CliReport cli = make_cli_report("wb", report, config);
  cli.scale = !args.flags.no_scale;
  cli.drop_last_row = false;
  cli.extra["num_dists"] = inst.problem.num_dists;
  cli.extra["m"] = inst.problem.m;
  if (args.flags.verify) {
    try {
      const WbReference ref = wb_reference(inst.problem);
      const double delta = relative_delta(report.objective_primal, ref.objective);
      out << "oracle objective " << format_double(ref.objective) << "\n"
          << "oracle delta " << std::scientific << std::setprecision(3) << delta
          << std::defaultfloat << "\n";
      cli.extra["oracle_objective"] = ref.objective;
      cli.extra["oracle_delta"] = delta;
    } catch (const SizeLimit& e) {
      err << "verify skipped: " << e.what() << "\n";
    }
  }
  if (!args.bary_out.empty()) {
    GridDistribution bary = inst.support;
    bary.mass = report.barycenter;
    write_file(args.bary_out, grid_to_csv(bary));
  }
  if (!args.flags.json_path.empty()) write_file(args.flags.json_path, dump_report(cli));
  return exit_for(report.status);
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::string cls;
  int res = 0;
  std::uint64_t seed = 0;
  std::string out_path;
};

int cmd_gen(const GenArgs& args, std::ostream& out) {
  const GridDistribution d = generate_synthetic(parse_synthetic_class(args.cls), args.res, args.seed);
  write_file(args.out_path, grid_to_csv(d));
  out << "wrote " << d.mass.size() << " values to " << args.out_path << "\n";
  return kExitOptimal;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::vector<std::string> classes;
  int res = 0;
  int pairs = 1;
  std::uint64_t seed = 0;
  std::string json_path;
  double tol = 1e-8;
  int max_iter = 1000;
  double time_limit = 86400.0;
};

struct BenchRow {
  std::string cls;
  int pair = 0;
  std::uint64_t seed_a = 0;
  std::uint64_t seed_b = 0;
  SolveReport report;
  std::string error;
};

int bench_threads() {
  const char* env = std::getenv("SOLVER_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

int cmd_bench(const BenchArgs& args, std::ostream& out) {
  std::vector<SyntheticClass> classes;
  for (const auto& c : args.classes) classes.push_back(parse_synthetic_class(c));
  if (args.pairs < 1) throw std::invalid_argument("--pairs must be >= 1");

  std::vector<BenchRow> rows;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (int p = 0; p < args.pairs; ++p) {
      BenchRow row;
      row.cls = to_string(classes[c]);
      row.pair = p;
      row.seed_a = args.seed + 1000003ULL * c + 2ULL * p;
      row.seed_b = row.seed_a + 1;
      rows.push_back(row);
    }
  }

  SolverConfig config;
  config.tol = args.tol;
  config.max_iter = args.max_iter;
  config.time_limit_secs = args.time_limit;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < rows.size(); k = next++) {
      BenchRow& row = rows[k];
      try {
        const auto cls = parse_synthetic_class(row.cls);
        const auto inst = build_ot_problem(generate_synthetic(cls, args.res, row.seed_a),
                                           generate_synthetic(cls, args.res, row.seed_b));
        row.report = solve_ot(inst.problem, config);
        row.report.x.resize(0);
        row.report.y.resize(0);
        row.report.plans.clear();
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  };
  const int threads = std::min<int>(bench_threads(), static_cast<int>(rows.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  bool all_optimal = true;
  nlohmann::json instances = nlohmann::json::array();
  nlohmann::json aggregate = nlohmann::json::array();
  out << std::left << std::setw(12) << "class" << std::right << std::setw(10) << "time(s)"
      << std::setw(8) << "iter" << std::setw(11) << "eta_p" << std::setw(11) << "eta_d"
      << std::setw(11) << "eta_c" << std::setw(11) << "eta_g" << std::setw(10) << "optimal"
      << "\n";
  for (const auto& cls : classes) {
    const std::string name = to_string(cls);
    double time = 0.0, iter = 0.0, ep = 0.0, ed = 0.0, ec = 0.0, eg = 0.0;
    int count = 0;
    int optimal = 0;
    for (const auto& row : rows) {
      if (row.cls != name) continue;
      nlohmann::json inst = {{"class", row.cls}, {"pair", row.pair}, {"seed_a", row.seed_a},
                             {"seed_b", row.seed_b}};
      if (!row.error.empty()) {
        all_optimal = false;
        inst["status"] = "Error";
        inst["error"] = row.error;
        instances.push_back(inst);
        continue;
      }
      const SolveReport& r = row.report;
      inst["status"] = to_string(r.status);
      inst["iterations"] = r.iterations;
      inst["solve_seconds"] = r.solve_seconds;
      inst["eta_p"] = r.eta_p;
      inst["eta_d"] = r.eta_d;
      inst["eta_c"] = r.eta_c;
      inst["eta_g"] = r.eta_g;
      inst["objective_primal"] = r.objective_primal;
      inst["nnz_plan"] = r.nnz_plan;
      instances.push_back(inst);
      if (r.status == SolveStatus::Optimal) {
        ++optimal;
      } else {
        all_optimal = false;
      }
      time += r.solve_seconds;
      iter += r.iterations;
      ep += r.eta_p;
      ed += r.eta_d;
      ec += r.eta_c;
      eg += r.eta_g;
      ++count;
    }
    const double k = count > 0 ? count : 1.0;
    aggregate.push_back({{"class", name}, {"instances", args.pairs}, {"optimal", optimal},
                         {"mean_seconds", time / k}, {"mean_iterations", iter / k},
                         {"mean_eta_p", ep / k}, {"mean_eta_d", ed / k}, {"mean_eta_c", ec / k},
                         {"mean_eta_g", eg / k}});
    out << std::left << std::setw(12) << name << std::right << std::fixed << std::setprecision(2)
        << std::setw(10) << time / k << std::setprecision(1) << std::setw(8) << iter / k
        << std::scientific << std::setprecision(2) << std::setw(11) << ep / k << std::setw(11)
        << ed / k << std::setw(11) << ec / k << std::setw(11) << eg / k << std::defaultfloat
        << std::setw(10) << (std::to_string(optimal) + "/" + std::to_string(args.pairs)) << "\n";
  }

  if (!args.json_path.empty()) {
    nlohmann::json j = {{"resolution", args.res}, {"pairs", args.pairs}, {"seed", args.seed},
                        {"tol", args.tol}, {"max_iter", args.max_iter},
                        {"threads", threads}, {"aggregate", aggregate}, {"instances", instances}};
    write_file(args.json_path, j.dump(2) + "\n");
  }
  return all_optimal ? kExitOptimal : kExitNotOptimal;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Smoothing Newton solver for optimal transport and Wasserstein barycenters", "sqsn"};
  app.require_subcommand(1);

  OtArgs ot;
  auto* ot_cmd = app.add_subcommand("ot", "solve one OT problem between two grids");
  ot_cmd->add_option("--a", ot.a_path, "source distribution (csv or pgm)")->required();
  ot_cmd->add_option("--b", ot.b_path, "target distribution (csv or pgm)")->required();
  ot_cmd->add_option("--cost", ot.cost_path, "cost matrix CSV over original pixels");
  ot_cmd->add_flag("--keep-last-row", ot.keep_last_row, "keep the redundant last column-sum row");
  ot_cmd->add_option("--plan-out", ot.plan_out, "write the plan as i,j,value triplets");
  add_solver_flags(*ot_cmd, ot.flags);

  WbArgs wb;
  auto* wb_cmd = app.add_subcommand("wb", "solve a fixed-support barycenter problem");
  wb_cmd->add_option("--inputs", wb.inputs, "input distributions")->required()->expected(1, -1);
  wb_cmd->add_option("--weights", wb.weights, "uniform or a file of N weights")->capture_default_str();
  wb_cmd->add_option("--support", wb.support, "barycenter grid as WxH")->required();
  wb_cmd->add_option("--bary-out", wb.bary_out, "write the barycenter as a CSV grid");
  add_solver_flags(*wb_cmd, wb.flags);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic distribution");
  gen_cmd->add_option("--class", gen.cls, "whitenoise, smooth or bump")
      ->required()
      ->check(CLI::IsMember({"whitenoise", "smooth", "bump"}));
  gen_cmd->add_option("--res", gen.res, "grid resolution")->required()->check(CLI::Range(2, 1 << 14));
  gen_cmd->add_option("--seed", gen.seed, "random seed")->required();
  gen_cmd->add_option("--out", gen.out_path, "output CSV")->required();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "solve seeded synthetic OT batches");
  bench_cmd->add_option("--classes", bench.classes, "classes to run")
      ->required()
      ->delimiter(',')
      ->check(CLI::IsMember({"whitenoise", "smooth", "bump"}));
  bench_cmd->add_option("--res", bench.res, "grid resolution")->required()->check(CLI::Range(2, 1 << 14));
  bench_cmd->add_option("--pairs", bench.pairs, "instances per class")->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "base seed")->required();
  bench_cmd->add_option("--json", bench.json_path, "write per-instance and aggregate results");
  bench_cmd->add_option("--tol", bench.tol, "stopping tolerance")->capture_default_str();
  bench_cmd->add_option("--max-iter", bench.max_iter, "iteration cap")->capture_default_str();
  bench_cmd->add_option("--time-limit", bench.time_limit, "seconds per instance")->capture_default_str();

  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.push_back("sqsn");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitInputError;
  }

  try {
    if (ot_cmd->parsed()) return cmd_ot(ot, out, err);
    if (wb_cmd->parsed()) return cmd_wb(wb, out, err);
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (bench_cmd->parsed()) return cmd_bench(bench, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << " (at " << e.location() << ")\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace sqsn::cli
