// hjbscan: run the LQT and scalar nonlinear solvers from a YAML config and
// write CSV/JSON plot data.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hjbscan/config.hpp"
#include "hjbscan/lqt_solver.hpp"
#include "hjbscan/nl_cache.hpp"
#include "hjbscan/nl_hjb.hpp"
#include "hjbscan/oracle.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace hjbscan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitCheck = 4;

constexpr double kCheckTolerance = 1e-6;

struct CommonFlags {
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out = "out";
  long seed = 0;
  int timing_runs = 5;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& file, const std::vector<std::string>& header) : out_(file) {
    if (!out_) throw std::runtime_error("cannot write " + file.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Warm-up run discarded, then the per-phase median over `runs` repetitions.
template <class Solve>
json time_phases(Solve&& solve, int runs) {
  solve();
  std::vector<double> el, sc, de, re, tot;
  for (int r = 0; r < runs; ++r) {
    const PhaseTimes t = solve().times;
    el.push_back(t.elements);
    sc.push_back(t.scan);
    de.push_back(t.densify);
    re.push_back(t.recovery);
    tot.push_back(t.total());
  }
  return json{{"elements", median(el)}, {"scan", median(sc)}, {"densify", median(de)},
              {"recovery", median(re)}, {"total", median(tot)}};
}

void write_trajectory(const fs::path& file, const Trajectory& tr) {
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < tr.states.front().size(); ++i) header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 0; i < tr.controls.front().size(); ++i) header.push_back("u" + std::to_string(i));
  CsvWriter csv(file, header);
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    std::vector<std::string> row{fmt(tr.times[k])};
    for (Eigen::Index i = 0; i < tr.states[k].size(); ++i) row.push_back(fmt(tr.states[k][i]));
    for (Eigen::Index i = 0; i < tr.controls[k].size(); ++i) row.push_back(fmt(tr.controls[k][i]));
    csv.row(row);
  }
}

void write_value_params(const fs::path& file, const ValueSequence& values) {
  const auto nodes = values.nodes();
  const Eigen::Index n = nodes.front().v.size();
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < n; ++k) header.push_back("S" + std::to_string(i) + std::to_string(k));
  for (Eigen::Index i = 0; i < n; ++i) header.push_back("v" + std::to_string(i));
  CsvWriter csv(file, header);
  for (const auto& vp : nodes) {
    std::vector<std::string> row{fmt(vp.t)};
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < n; ++k) row.push_back(fmt(vp.S(i, k)));
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(fmt(vp.v[i]));
    csv.row(row);
  }
}

void write_grid_values(const fs::path& file, const std::vector<GridValueFn>& values) {
  CsvWriter csv(file, {"t", "x", "V"});
  for (const auto& slice : values) {
    for (int i = 0; i < slice.grid.num_points; ++i) {
      csv.row({fmt(slice.t), fmt(slice.grid.point(i)), fmt(slice.values[i])});
    }
  }
}

json gap_json(const SolutionGap& g) {
  return json{{"S", g.S}, {"v", g.v}, {"states", g.states}, {"controls", g.controls}, {"max", g.max()}};
}

/// Largest |S(t) - closed form| / max |closed form| over the nodes.
double scalar_oracle_error(const ValueSequence& values, const oracle::ScalarLqrClosedForm& cf) {
  double diff = 0.0, scale = 0.0;
  for (const auto& vp : values.nodes()) {
    const double exact = cf.S(vp.t);
    diff = std::max({diff, std::abs(vp.S(0, 0) - exact), std::abs(vp.v[0])});
    scale = std::max(scale, std::abs(exact));
  }
  return diff / scale;
}

// ---------------------------------------------------------------------------

struct LqtFlags {
  std::string config;
  std::string backend = "par";
  std::vector<int> blocks;
  int steps = 0;
  bool check = false;
  bool oracle = false;
  std::string init;
  std::string method;
};

int cmd_solve_lqt(const LqtFlags& f, const CommonFlags& c) {
  LqtConfig cfg = load_lqt_config(f.config);
  if (!f.init.empty()) cfg.options.init = f.init == "forward" ? ElementInit::kForward : ElementInit::kBackward;
  if (!f.method.empty()) {
    cfg.options.recovery = f.method == "conditional" ? Recovery::kConditional : Recovery::kTransitions;
  }
  if (f.oracle && cfg.kind != LqtKind::kScalarLqr) throw ConfigError("--oracle needs a scalar-lqr config", 0);
  const std::vector<int> sweep = f.blocks.empty() ? std::vector<int>{cfg.grid.num_blocks} : f.blocks;
  const int n = f.steps > 0 ? f.steps : cfg.grid.steps_per_block;
  const bool run_seq = f.backend != "par" || f.check;
  const bool run_par = f.backend != "seq";

  fs::create_directories(c.out);
  WorkerPool pool(c.threads);
  cfg.options.backend = Backend::kParallel;
  json report{{"command", "solve-lqt"}, {"seed", c.seed}, {"backend", f.backend}, {"runs", json::array()}};
  json timing{{"command", "solve-lqt"}, {"threads", pool.size()}, {"timing_runs", c.timing_runs},
              {"runs", json::array()}};
  bool failed = false;

  for (int T : sweep) {
    const TimeGrid grid = make_uniform_grid(cfg.grid.t0, cfg.grid.tf, T, n);
    std::optional<LqtSolution> seq, par;
    if (run_seq) seq = solve_lqt_sequential(cfg.problem, grid);
    if (run_par) par = solve_lqt_parallel(cfg.problem, grid, cfg.options, &pool);
    const LqtSolution& primary = par ? *par : *seq;
    const std::string tag = "T" + std::to_string(T);
    write_trajectory(fs::path(c.out) / ("trajectory_" + tag + ".csv"), primary.trajectory);
    write_value_params(fs::path(c.out) / ("values_" + tag + ".csv"), primary.values);

    json row{{"T", T}, {"n", n}, {"t0", grid.t0}, {"tf", grid.tf}};
    if (par) row["scan_depth"] = par->scan_depth;
    if (f.check && par) {
      const SolutionGap gap = compare_solutions(*par, *seq);
      row["max_rel_err"] = gap_json(gap);
      row["check_passed"] = gap.max() <= kCheckTolerance;
      failed |= gap.max() > kCheckTolerance;
    }
    if (f.oracle) {
      const oracle::ScalarLqrClosedForm cf(cfg.scalar_terminal_weight, grid.tf);
      json err;
      if (seq) err["sequential"] = scalar_oracle_error(seq->values, cf);
      if (par) err["parallel"] = scalar_oracle_error(par->values, cf);
      bool ok = true;
      for (const auto& [k, v] : err.items()) ok &= v.get<double>() <= kCheckTolerance;
      row["oracle_rel_err"] = err;
      row["oracle_passed"] = ok;
      failed |= !ok;
    }
    report["runs"].push_back(row);

    if (c.timing_runs > 0) {
      json trow{{"T", T}, {"n", n}};
      if (run_seq) trow["sequential_ms"] = time_phases([&] { return solve_lqt_sequential(cfg.problem, grid); }, c.timing_runs);
      if (run_par) {
        trow["parallel_ms"] =
            time_phases([&] { return solve_lqt_parallel(cfg.problem, grid, cfg.options, &pool); }, c.timing_runs);
      }
      timing["runs"].push_back(trow);
    }
    std::cout << "T=" << T << " n=" << n << (par ? " scan_depth=" + std::to_string(par->scan_depth) : "");
    if (row.contains("max_rel_err")) std::cout << " max_rel_err=" << row["max_rel_err"]["max"].get<double>();
    if (row.contains("oracle_rel_err")) std::cout << " oracle=" << row["oracle_rel_err"].dump();
    std::cout << '\n';
  }
  write_json(fs::path(c.out) / "report.json", report);
  if (c.timing_runs > 0) write_json(fs::path(c.out) / "timing.json", timing);
  return failed ? kExitCheck : kExitOk;
}

// ---------------------------------------------------------------------------

struct NonlinearFlags {
  std::string config;
  std::string backend = "par";
  std::vector<int> grid_sizes;
  std::vector<int> blocks;
  int steps = 0;
  std::string method = "both";
  bool compare = false;
  std::string cache_dir;
  int upwind_substeps = 0;
};

int cmd_solve_nonlinear(const NonlinearFlags& f, const CommonFlags& c) {
  const NonlinearConfig cfg = load_nonlinear_config(f.config);
  const std::vector<int> sizes = f.grid_sizes.empty() ? cfg.grid_sizes : f.grid_sizes;
  const int T = f.blocks.empty() ? cfg.blocks : f.blocks.front();
  const int n = f.steps > 0 ? f.steps : cfg.steps_per_block;
  const int substeps = f.upwind_substeps > 0 ? f.upwind_substeps : cfg.upwind_substeps;
  const bool run_upwind = f.method != "parallel";
  const bool run_parallel = f.method != "upwind";
  if (f.compare && !(run_upwind && run_parallel)) throw ConfigError("--compare needs --method both", 0);

  fs::create_directories(c.out);
  WorkerPool pool(c.threads);
  const Execution exec{f.backend == "seq" ? Backend::kSequential : Backend::kParallel, &pool};
  const TimeGrid tgrid = make_uniform_grid(0.0, T * cfg.block_length, T, n);
  json report{{"command", "solve-nonlinear"}, {"seed", c.seed}, {"method", f.method}, {"runs", json::array()}};
  json timing{{"command", "solve-nonlinear"}, {"threads", pool.size()}, {"runs", json::array()}};

  for (int M : sizes) {
    const StateGrid grid = make_state_grid(cfg.x_min, cfg.x_max, M);
    json row{{"M", M}, {"T", T}, {"n", n}, {"x_min", cfg.x_min}, {"x_max", cfg.x_max}};
    json trow{{"M", M}, {"T", T}};
    std::vector<GridValueFn> up, par;
    if (run_upwind) {
      const auto start = std::chrono::steady_clock::now();
      up = upwind_solve(cfg.problem, grid, tgrid, substeps);
      trow["upwind_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      row["upwind_substeps_per_block"] = substeps;
      write_grid_values(fs::path(c.out) / ("values_upwind_M" + std::to_string(M) + ".csv"), up);
    }
    if (run_parallel) {
      auto start = std::chrono::steady_clock::now();
      std::optional<BlockElement> element;
      const std::uint64_t key = element_cache_key(cfg.problem, grid, cfg.block_length, n);
      if (!f.cache_dir.empty()) element = load_element(element_cache_path(f.cache_dir, key), key, grid, 0.0, cfg.block_length);
      trow["cache_hit"] = element.has_value();
      if (!element) {
        element = build_block_element(cfg.problem, grid, 0.0, cfg.block_length, n, exec);
        if (!f.cache_dir.empty()) save_element(element_cache_path(f.cache_dir, key), key, *element);
      }
      trow["elements_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      start = std::chrono::steady_clock::now();
      ScanStats stats;
      par = nl_parallel_solve(cfg.problem, grid, tgrid, {element->element}, exec, &stats);
      trow["scan_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      const ElementDiagnostics& d = element->diagnostics;
      row["scan_depth"] = stats.up_sweep_levels;
      row["shooting"] = json{{"pairs", d.pairs},
                             {"converged", d.converged},
                             {"out_of_range", d.out_of_range},
                             {"failed", d.failed},
                             {"max_constraint_violation", d.max_constraint_violation}};
      write_grid_values(fs::path(c.out) / ("values_parallel_M" + std::to_string(M) + ".csv"), par);
    }
    if (f.compare) row["max_abs_gap"] = max_abs_gap(par, up);
    report["runs"].push_back(row);
    timing["runs"].push_back(trow);
    std::cout << "M=" << M << " T=" << T;
    if (f.compare) std::cout << " max_abs_gap=" << row["max_abs_gap"].get<double>();
    std::cout << '\n';
  }
  write_json(fs::path(c.out) / "report.json", report);
  write_json(fs::path(c.out) / "timing.json", timing);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int demo_scalar_lqr() {
  const LqtProblem p = scalar_lqr_problem(1.0);
  const TimeGrid grid = make_uniform_grid(0.0, 1.0, 10, 25);
  const oracle::ScalarLqrClosedForm cf(1.0, 1.0);
  const ValueSequence seq = riccati_backward(p, grid);
  const BackwardPassResult back = backward_value_pass(p, grid, Execution{});
  std::printf("%6s %18s %18s %18s\n", "t", "S closed form", "S sequential", "J(t,tf+) scan");
  for (int k = 0; k <= grid.num_blocks; ++k) {
    const double t = grid.edge(k);
    std::printf("%6.2f %18.12f %18.12f %18.12f\n", t, cf.S(t), seq.at(t).S(0, 0), back.edge_values[k].S(0, 0));
  }
  return kExitOk;
}

int demo_reachable() {
  const int T = 10;
  std::vector<oracle::ReachableScalarElement> blocks;
  for (int j = 0; j < T; ++j) blocks.push_back(oracle::ReachableScalarElement::over(j / 10.0, (j + 1) / 10.0));
  const auto prefix = inclusive_scan(blocks, oracle::gamma_combine, ScanPlan{blocks.size(), ScanDirection::kForward,
                                                                             Backend::kSequential});
  std::printf("%6s %18s %18s\n", "y", "V(y,0) scan", "V(y,0) closed form");
  for (int i = 0; i <= 20; ++i) {
    const double y = -1.0 + 0.1 * i;
    std::printf("%6.2f %18.12f %18.12f\n", y, oracle::reachable_value_from_element(prefix.back(), y),
                oracle::reachable_value(y, 0.0));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-parallel HJB solvers: LQT via associative scans and a scalar nonlinear grid path"};
  app.require_subcommand(1);
  CommonFlags common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--threads", common.threads, "Worker threads (default: hardware concurrency)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--seed", common.seed, "Recorded in the report; the solvers are deterministic");
    sub->add_option("--timing-runs", common.timing_runs, "Timed repetitions after one warm-up (0 disables timing)")
        ->check(CLI::NonNegativeNumber);
  };

  LqtFlags lqt;
  CLI::App* solve_lqt = app.add_subcommand("solve-lqt", "Solve an LQT problem sequentially and/or in parallel");
  solve_lqt->add_option("config", lqt.config, "YAML config")->required();
  solve_lqt->add_option("--backend", lqt.backend, "seq, par or both")->check(CLI::IsMember({"seq", "par", "both"}));
  solve_lqt->add_option("--T", lqt.blocks, "Number of blocks; a comma list runs a sweep")->delimiter(',');
  solve_lqt->add_option("--n", lqt.steps, "Steps per block")->check(CLI::PositiveNumber);
  solve_lqt->add_flag("--check", lqt.check, "Compare against the sequential baseline (fails above 1e-6)");
  solve_lqt->add_flag("--oracle", lqt.oracle, "Compare against the scalar closed form (scalar-lqr configs)");
  solve_lqt->add_option("--init", lqt.init, "Element initialisation: backward or forward")
      ->check(CLI::IsMember({"backward", "forward"}));
  solve_lqt->add_option("--method", lqt.method, "Trajectory recovery: transitions or conditional")
      ->check(CLI::IsMember({"transitions", "conditional"}));
  add_common(solve_lqt);

  NonlinearFlags nl;
  CLI::App* solve_nl = app.add_subcommand("solve-nonlinear", "Solve a scalar nonlinear problem on state grids");
  solve_nl->add_option("config", nl.config, "YAML config")->required();
  solve_nl->add_option("--backend", nl.backend, "seq or par")->check(CLI::IsMember({"seq", "par"}));
  solve_nl->add_option("--grid-size", nl.grid_sizes, "State grid sizes; a comma list runs a sweep")->delimiter(',');
  solve_nl->add_option("--T", nl.blocks, "Number of blocks")->check(CLI::PositiveNumber);
  solve_nl->add_option("--n", nl.steps, "Shooting intervals per block")->check(CLI::PositiveNumber);
  solve_nl->add_option("--method", nl.method, "upwind, parallel or both")
      ->check(CLI::IsMember({"upwind", "parallel", "both"}));
  solve_nl->add_flag("--compare", nl.compare, "Report the max-abs gap between the two methods");
  solve_nl->add_option("--cache-dir", nl.cache_dir, "Directory for cached block elements");
  solve_nl->add_option("--upwind-substeps", nl.upwind_substeps, "Upwind time steps per block")
      ->check(CLI::PositiveNumber);
  add_common(solve_nl);

  std::string which;
  CLI::App* demo = app.add_subcommand("demo", "Print a closed-form comparison table");
  demo->add_option("which", which, "scalar-lqr or wang")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*solve_lqt) return cmd_solve_lqt(lqt, common);
    if (*solve_nl) return cmd_solve_nonlinear(nl, common);
    if (which == "scalar-lqr") return demo_scalar_lqr();
    if (which == "wang") return demo_reachable();
    std::cerr << "unknown demo '" << which << "' (expected scalar-lqr or wang)\n" << demo->help();
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kExitSolver;
  }
}
