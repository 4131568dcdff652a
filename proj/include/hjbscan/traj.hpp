#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hjbscan/lqt_par.hpp"
#include "hjbscan/lqt_seq.hpp"
#include "hjbscan/model.hpp"
#include "hjbscan/ode_rk4.hpp"
#include "hjbscan/parallel.hpp"
#include "hjbscan/scan.hpp"

namespace hjbscan {

namespace detail {

inline Eigen::VectorXd pack_segment(const TransitionSegment& seg) {
  const Eigen::Index n = seg.alpha.size();
  Eigen::VectorXd y(n * n + n);
  y.head(n * n) = Eigen::Map<const Eigen::VectorXd>(seg.Psi.data(), n * n);
  y.tail(n) = seg.alpha;
  return y;
}

inline TransitionSegment unpack_segment(const Eigen::VectorXd& y, Eigen::Index n, double s, double t) {
  return TransitionSegment{Eigen::Map<const MatrixXd>(y.data(), n, n), y.tail(n), s, t};
}

}  // namespace detail

/// Psi(t, t_j), alpha(t, t_j) at every node of `values` (the dense value
/// parameters of one block, with midpoints). The last entry spans the block.
inline std::vector<TransitionSegment> psi_alpha_block(const LqtProblem& p, const ValueSequence& values) {
  const Eigen::Index n = p.nx;
  const auto nodes = values.nodes();
  std::vector<double> times(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) times[k] = nodes[k].t;

  auto f = [&](double t, const Eigen::VectorXd& y) {
    const ClosedLoop cl = closed_loop(p, values.at(t));
    const Eigen::Map<const MatrixXd> Psi(y.data(), n, n);
    const MatrixXd dPsi = cl.Ft * Psi;
    Eigen::VectorXd out(n * n + n);
    out.head(n * n) = Eigen::Map<const Eigen::VectorXd>(dPsi.data(), n * n);
    out.tail(n) = cl.Ft * y.tail(n) + cl.ct;
    return out;
  };
  const TransitionSegment start = TransitionSegment::identity(p.nx, times.front());
  const auto states = integrate_over(f, std::span<const double>(times), detail::pack_segment(start));
  std::vector<TransitionSegment> out;
  out.reserve(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) out.push_back(detail::unpack_segment(states[k], n, times.front(), times[k]));
  return out;
}

/// (seg1 over [s, tau]) then (seg2 over [tau, t]):
///   Psi(t,s) = Psi(t,tau) Psi(tau,s),  alpha(t,s) = Psi(t,tau) alpha(tau,s) + alpha(t,tau).
inline TransitionSegment compose_transitions(const TransitionSegment& seg1, const TransitionSegment& seg2) {
  const double tol = 1e-9 * std::max({1.0, std::abs(seg1.t), std::abs(seg2.s)});
  if (std::abs(seg1.t - seg2.s) > tol) {
    throw std::invalid_argument("compose_transitions: segments are not adjacent (" + std::to_string(seg1.t) +
                                " vs " + std::to_string(seg2.s) + ")");
  }
  return TransitionSegment{seg2.Psi * seg1.Psi, seg2.Psi * seg1.alpha + seg2.alpha, seg1.s, seg2.t};
}

/// Per-block transition data for Method 1.
struct BlockTransitions {
  std::vector<std::vector<TransitionSegment>> intra;  // intra[j][i] = (Psi, alpha)(t_{j,i}, t_j)
};

inline BlockTransitions block_transitions(const LqtProblem& p, const TimeGrid& grid, const ValueSequence& dense,
                                          const Execution& exec) {
  BlockTransitions bt;
  bt.intra.resize(grid.num_blocks);
  const int n = grid.steps_per_block;
  exec.for_each(bt.intra.size(), [&](std::size_t j) {
    ValueSequence block;
    const auto first = dense.samples.begin() + static_cast<std::ptrdiff_t>(2 * n * j);
    block.samples.assign(first, first + 2 * n + 1);
    bt.intra[j] = psi_alpha_block(p, block);
  });
  return bt;
}

/// Method 1: scan the block transitions, then fill in every block from its
/// starting state.
inline std::vector<VectorXd> recover_method1(const BlockTransitions& bt, const VectorXd& x0, const Execution& exec,
                                             ScanStats* stats = nullptr) {
  const std::size_t T = bt.intra.size();
  std::vector<TransitionSegment> segments;
  segments.reserve(T);
  for (const auto& b : bt.intra) segments.push_back(b.back());
  const ScanPlan plan{T, ScanDirection::kForward, exec.backend};
  const auto prefix = inclusive_scan(segments, compose_transitions, plan, exec.pool,
                                     std::optional<TransitionSegment>{}, stats);

  const std::size_t n = bt.intra.front().size() - 1;
  std::vector<VectorXd> states(T * n + 1);
  states[0] = x0;
  exec.for_each(T, [&](std::size_t j) {
    const VectorXd start = j == 0 ? x0 : VectorXd(prefix[j - 1].Psi * x0 + prefix[j - 1].alpha);
    for (std::size_t i = 1; i <= n; ++i) {
      const TransitionSegment& seg = bt.intra[j][i];
      states[j * n + i] = seg.Psi * start + seg.alpha;
    }
  });
  return states;
}

/// x* = (I + C S)^-1 (A x0 + b + C v) with (A, b, C) from V(., t0; ., t).
inline VectorXd state_from_conditional(const CondValueParams& prefix, const ValueParams& value, const VectorXd& x0) {
  const Eigen::Index n = x0.size();
  const MatrixXd M = MatrixXd::Identity(n, n) + prefix.C * value.S;
  const Eigen::PartialPivLU<MatrixXd> lu(M);
  const double rcond = lu_rcond(lu);
  if (!(rcond > 1.0 / kMaxConditionEstimate)) {
    const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    throw IllConditionedError("trajectory recovery: I + C S is singular or ill-conditioned at t=" +
                                  std::to_string(value.t) + " (condition estimate " + std::to_string(cond) + ")",
                              cond);
  }
  return lu.solve(prefix.A * x0 + prefix.b + prefix.C * value.v);
}

/// V(., t0; ., t) at every grid node: block-edge values come from the forward
/// scan, interior values from the forward conditional ODEs started at the
/// preceding edge on the same step size as the element initialisation.
inline std::vector<CondValueParams> conditional_prefixes_dense(const LqtProblem& p, const TimeGrid& grid,
                                                               const std::vector<CondValueParams>& edge_prefixes,
                                                               const Execution& exec) {
  const int n = grid.steps_per_block;
  std::vector<CondValueParams> out(grid.num_points());
  out[0] = CondValueParams::identity(p.nx, grid.t0);
  exec.for_each(static_cast<std::size_t>(grid.num_blocks), [&](std::size_t jj) {
    const int j = static_cast<int>(jj);
    const CondValueParams start = j == 0 ? CondValueParams::identity(p.nx, grid.t0) : edge_prefixes[j - 1];
    const std::vector<double> fine = refine_times(grid.block_times(j), kSubstepsPerGridStep);
    const auto sweep = extend_forward(p, start, fine);
    for (int i = 1; i < n; ++i) out[j * n + i] = sweep[static_cast<std::size_t>(i * kSubstepsPerGridStep)];
    out[(j + 1) * n] = edge_prefixes[j];
  });
  return out;
}

/// Method 2: every state independently from the conditional prefix and the
/// value parameters at the same time.
inline std::vector<VectorXd> recover_method2(const std::vector<CondValueParams>& prefixes,
                                             const std::vector<ValueParams>& values, const VectorXd& x0,
                                             const Execution& exec) {
  if (prefixes.size() != values.size()) throw std::invalid_argument("recover_method2: length mismatch");
  std::vector<VectorXd> states(values.size());
  exec.for_each(values.size(), [&](std::size_t k) { states[k] = state_from_conditional(prefixes[k], values[k], x0); });
  return states;
}

inline std::vector<VectorXd> controls_along(const LqtProblem& p, const std::vector<ValueParams>& values,
                                            const std::vector<VectorXd>& states, const Execution& exec) {
  if (states.size() != values.size()) throw std::invalid_argument("controls_along: length mismatch");
  std::vector<VectorXd> controls(states.size());
  exec.for_each(states.size(), [&](std::size_t k) { controls[k] = control_law(p, values[k], states[k]); });
  return controls;
}

}  // namespace hjbscan
