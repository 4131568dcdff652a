#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hjbscan/model.hpp"
#include "hjbscan/ode_rk4.hpp"

namespace hjbscan {

/// S(t), v(t) sampled on a set of node times plus the midpoint of every step.
///
/// Forward RK4 passes need the value parameters at t, t + h/2 and t + h, so
/// the backward pass keeps both.
struct ValueSequence {
  std::vector<ValueParams> samples;  // node, mid, node, ..., node (time-increasing)

  int num_nodes() const { return static_cast<int>((samples.size() + 1) / 2); }
  const ValueParams& node(int k) const { return samples[2 * k]; }
  const ValueParams& mid(int k) const { return samples[2 * k + 1]; }

  std::vector<ValueParams> nodes() const {
    std::vector<ValueParams> out;
    out.reserve(num_nodes());
    for (int k = 0; k < num_nodes(); ++k) out.push_back(node(k));
    return out;
  }

  /// Sample whose time equals `t` up to rounding of the uniform spacing.
  const ValueParams& at(double t) const {
    const double first = samples.front().t;
    const double last = samples.back().t;
    const double spacing = (last - first) / static_cast<double>(samples.size() - 1);
    const long idx = std::lround((t - first) / spacing);
    if (idx < 0 || idx >= static_cast<long>(samples.size()) ||
        std::abs(samples[idx].t - t) > 1e-6 * spacing) {
      throw std::out_of_range("no value sample at t=" + std::to_string(t));
    }
    return samples[idx];
  }
};

namespace detail {

inline Eigen::VectorXd pack_value(const ValueParams& vp) {
  const Eigen::Index n = vp.v.size();
  Eigen::VectorXd out(n * n + n);
  out.head(n * n) = Eigen::Map<const Eigen::VectorXd>(vp.S.data(), n * n);
  out.tail(n) = vp.v;
  return out;
}

inline ValueParams unpack_value(const Eigen::VectorXd& y, Eigen::Index n, double t) {
  ValueParams vp;
  vp.S = Eigen::Map<const MatrixXd>(y.data(), n, n);
  vp.v = y.tail(n);
  vp.t = t;
  return vp;
}

}  // namespace detail

/// Right-hand side of the backward Riccati ODEs for (S, v).
inline Eigen::VectorXd riccati_derivative(const LqtProblem& p, double t, const Eigen::VectorXd& y) {
  const Eigen::Index n = p.nx;
  const LqtCoefficients k = coefficients_at(p, t);
  const Eigen::Map<const MatrixXd> S(y.data(), n, n);
  const auto v = y.tail(n);
  const MatrixXd SK = S * k.K;
  const MatrixXd dS = -k.F.transpose() * S - S * k.F - k.Q + SK * S;
  const VectorXd dv = -k.q + S * k.c - k.F.transpose() * v + SK * v;
  Eigen::VectorXd out(n * n + n);
  out.head(n * n) = Eigen::Map<const Eigen::VectorXd>(dS.data(), n * n);
  out.tail(n) = dv;
  return out;
}

/// Integrates (S, v) backward from `end` (taken at node_times.back()) with
/// kSubstepsPerGridStep RK4 steps per node interval, keeping nodes and
/// midpoints. S is symmetrized after every step.
inline ValueSequence riccati_backward_over(const LqtProblem& p, const std::vector<double>& node_times,
                                           const ValueParams& end) {
  std::vector<double> fine = refine_times(node_times, kSubstepsPerGridStep);
  std::reverse(fine.begin(), fine.end());
  const Eigen::Index n = p.nx;
  auto f = [&p](double t, const Eigen::VectorXd& y) { return riccati_derivative(p, t, y); };
  auto project = [n](Eigen::VectorXd& y) {
    Eigen::Map<MatrixXd> S(y.data(), n, n);
    S = symmetrize(S);
  };
  const auto states = integrate_over(f, std::span<const double>(fine), detail::pack_value(end), project);
  constexpr std::size_t stride = kSubstepsPerGridStep / 2;
  const std::size_t kept = (states.size() - 1) / stride + 1;
  ValueSequence out;
  out.samples.resize(kept);
  for (std::size_t i = 0; i < states.size(); i += stride) {
    out.samples[kept - 1 - i / stride] = detail::unpack_value(states[i], n, fine[i]);
  }
  out.samples.back() = end;
  return out;
}

/// S(tf) = Hf' Xf Hf, v(tf) = Hf' Xf rf.
inline ValueParams terminal_value(const LqtProblem& p, double tf) {
  const MatrixXd HtX = p.Hf.transpose() * p.Xf;
  return ValueParams{symmetrize(HtX * p.Hf), HtX * p.rf, tf};
}

/// Sequential backward pass over the whole grid.
inline ValueSequence riccati_backward(const LqtProblem& p, const TimeGrid& grid) {
  ValueParams end = terminal_value(p, grid.tf);
  end.t = grid.time(grid.num_steps());
  return riccati_backward_over(p, grid.times(), end);
}

/// u* = U^-1 L' (v - S x), solved through the Cholesky factor of U.
inline VectorXd control_law(const LqtProblem& p, const ValueParams& vp, const VectorXd& x) {
  const MatrixXd U = p.U(vp.t);
  const Eigen::LLT<MatrixXd> chol(U);
  if (chol.info() != Eigen::Success) {
    throw SolverError("control weight U(t) is not positive definite at t=" + std::to_string(vp.t));
  }
  return chol.solve(p.L(vp.t).transpose() * (vp.v - vp.S * x));
}

/// Closed-loop dynamics dx/dt = Ft x + ct with Ft = F - K S, ct = K v + c.
struct ClosedLoop {
  MatrixXd Ft;
  VectorXd ct;
};

inline ClosedLoop closed_loop(const LqtProblem& p, const ValueParams& vp) {
  const LqtCoefficients k = coefficients_at(p, vp.t);
  return ClosedLoop{k.F - k.K * vp.S, k.K * vp.v + k.c};
}

/// Forward RK4 pass of the optimal closed loop over the nodes of `values`.
inline Trajectory integrate_trajectory(const LqtProblem& p, const ValueSequence& values, const VectorXd& x0) {
  const auto nodes = values.nodes();
  std::vector<double> times(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) times[k] = nodes[k].t;

  auto f = [&](double t, const VectorXd& x) {
    const ClosedLoop cl = closed_loop(p, values.at(t));
    return VectorXd(cl.Ft * x + cl.ct);
  };
  Trajectory traj;
  traj.times = times;
  traj.states = integrate_over(f, std::span<const double>(times), x0);
  traj.controls.reserve(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) traj.controls.push_back(control_law(p, nodes[k], traj.states[k]));
  return traj;
}

}  // namespace hjbscan
