#pragma once

#include <chrono>
#include <vector>

#include "hjbscan/lqt_par.hpp"
#include "hjbscan/lqt_seq.hpp"
#include "hjbscan/traj.hpp"

namespace hjbscan {

enum class Recovery { kTransitions, kConditional };

struct LqtOptions {
  Backend backend = Backend::kParallel;
  ElementInit init = ElementInit::kBackward;
  Recovery recovery = Recovery::kTransitions;
};

/// Wall-clock milliseconds per phase. Not part of any deterministic output.
struct PhaseTimes {
  double elements = 0.0;
  double scan = 0.0;
  double densify = 0.0;
  double recovery = 0.0;

  double total() const { return elements + scan + densify + recovery; }
};

struct LqtSolution {
  ValueSequence values;  // nodes and midpoints
  Trajectory trajectory;
  PhaseTimes times;
  int scan_depth = 0;
};

namespace detail {

class Stopwatch {
 public:
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Sequential baseline: Riccati backward on the fine grid, then the closed loop forward.
inline LqtSolution solve_lqt_sequential(const LqtProblem& p, const TimeGrid& grid) {
  LqtSolution sol;
  detail::Stopwatch watch;
  sol.values = riccati_backward(p, grid);
  sol.times.densify = watch.lap_ms();
  sol.trajectory = integrate_trajectory(p, sol.values, p.x0);
  sol.times.recovery = watch.lap_ms();
  return sol;
}

/// Block-parallel solver: elements, reverse scan, densification, then
/// trajectory recovery by Method 1 or Method 2.
inline LqtSolution solve_lqt_parallel(const LqtProblem& p, const TimeGrid& grid, const LqtOptions& opt,
                                      WorkerPool* pool) {
  const Execution exec{opt.backend, pool};
  LqtSolution sol;
  detail::Stopwatch watch;
  const auto elements = block_elements(p, grid, opt.init, exec);
  sol.times.elements = watch.lap_ms();

  const BackwardPassResult back = backward_value_pass(p, grid, exec, opt.init, &elements);
  sol.scan_depth = back.stats.up_sweep_levels;
  sol.times.scan = watch.lap_ms();

  sol.values = densify_all(p, grid, back.edge_values, exec);
  sol.times.densify = watch.lap_ms();

  const auto nodes = sol.values.nodes();
  std::vector<VectorXd> states;
  if (opt.recovery == Recovery::kTransitions) {
    states = recover_method1(block_transitions(p, grid, sol.values, exec), p.x0, exec);
  } else {
    const ForwardPassResult fwd = forward_conditional_pass(p, grid, exec, opt.init, &elements);
    states = recover_method2(conditional_prefixes_dense(p, grid, fwd.prefixes, exec), nodes, p.x0, exec);
  }
  sol.trajectory.times.reserve(nodes.size());
  for (const auto& vp : nodes) sol.trajectory.times.push_back(vp.t);
  sol.trajectory.controls = controls_along(p, nodes, states, exec);
  sol.trajectory.states = std::move(states);
  sol.times.recovery = watch.lap_ms();
  return sol;
}

/// max_k |a_k - b_k|_inf / max_k |b_k|_inf (absolute when b is identically 0).
inline double relative_max_gap(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_max_gap: length mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, (a[k] - b[k]).cwiseAbs().maxCoeff());
    scale = std::max(scale, b[k].cwiseAbs().maxCoeff());
  }
  return scale > 0.0 ? diff / scale : diff;
}

inline double relative_max_gap(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_max_gap: length mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, (a[k] - b[k]).cwiseAbs().maxCoeff());
    scale = std::max(scale, b[k].cwiseAbs().maxCoeff());
  }
  return scale > 0.0 ? diff / scale : diff;
}

/// Gaps between two solutions on the same grid: S, v, states and controls.
struct SolutionGap {
  double S = 0.0;
  double v = 0.0;
  double states = 0.0;
  double controls = 0.0;

  double max() const { return std::max({S, v, states, controls}); }
};

inline SolutionGap compare_solutions(const LqtSolution& a, const LqtSolution& reference) {
  std::vector<MatrixXd> Sa, Sb;
  std::vector<VectorXd> va, vb;
  for (const auto& s : a.values.samples) {
    Sa.push_back(s.S);
    va.push_back(s.v);
  }
  for (const auto& s : reference.values.samples) {
    Sb.push_back(s.S);
    vb.push_back(s.v);
  }
  return SolutionGap{relative_max_gap(Sa, Sb), relative_max_gap(va, vb),
                     relative_max_gap(a.trajectory.states, reference.trajectory.states),
                     relative_max_gap(a.trajectory.controls, reference.trajectory.controls)};
}

}  // namespace hjbscan
