#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hjbscan/lqt_seq.hpp"
#include "hjbscan/model.hpp"
#include "hjbscan/ode_rk4.hpp"
#include "hjbscan/parallel.hpp"
#include "hjbscan/scan.hpp"

namespace hjbscan {

/// Which conditional HJB equations initialise the per-block elements.
enum class ElementInit { kBackward, kForward };

/// Largest condition estimate accepted for (I + C J) solves.
inline constexpr double kMaxConditionEstimate = 1e12;

namespace detail {

// Layout: A (n*n), b (n), C (n*n), eta (n), J (n*n), all column-major.
inline Eigen::VectorXd pack_cond(const CondValueParams& e) {
  const Eigen::Index n = e.dim(), nn = n * n;
  Eigen::VectorXd y(3 * nn + 2 * n);
  y.segment(0, nn) = Eigen::Map<const Eigen::VectorXd>(e.A.data(), nn);
  y.segment(nn, n) = e.b;
  y.segment(nn + n, nn) = Eigen::Map<const Eigen::VectorXd>(e.C.data(), nn);
  y.segment(2 * nn + n, n) = e.eta;
  y.segment(2 * nn + 2 * n, nn) = Eigen::Map<const Eigen::VectorXd>(e.J.data(), nn);
  return y;
}

inline CondValueParams unpack_cond(const Eigen::VectorXd& y, Eigen::Index n, double s, double tau) {
  const Eigen::Index nn = n * n;
  CondValueParams e;
  e.A = Eigen::Map<const MatrixXd>(y.data(), n, n);
  e.b = y.segment(nn, n);
  e.C = Eigen::Map<const MatrixXd>(y.data() + nn + n, n, n);
  e.eta = y.segment(2 * nn + n, n);
  e.J = Eigen::Map<const MatrixXd>(y.data() + 2 * nn + 2 * n, n, n);
  e.s = s;
  e.tau = tau;
  return e;
}

inline void symmetrize_cond_state(Eigen::VectorXd& y, Eigen::Index n) {
  const Eigen::Index nn = n * n;
  Eigen::Map<MatrixXd> C(y.data() + nn + n, n, n);
  Eigen::Map<MatrixXd> J(y.data() + 2 * nn + 2 * n, n, n);
  C = symmetrize(C);
  J = symmetrize(J);
}

inline Eigen::VectorXd pack_derivatives(const MatrixXd& dA, const VectorXd& db, const MatrixXd& dC,
                                        const VectorXd& deta, const MatrixXd& dJ) {
  const Eigen::Index n = db.size(), nn = n * n;
  Eigen::VectorXd out(3 * nn + 2 * n);
  out.segment(0, nn) = Eigen::Map<const Eigen::VectorXd>(dA.data(), nn);
  out.segment(nn, n) = db;
  out.segment(nn + n, nn) = Eigen::Map<const Eigen::VectorXd>(dC.data(), nn);
  out.segment(2 * nn + n, n) = deta;
  out.segment(2 * nn + 2 * n, nn) = Eigen::Map<const Eigen::VectorXd>(dJ.data(), nn);
  return out;
}

}  // namespace detail

/// d/ds of (A, b, C, eta, J)(s, tau): the backward conditional HJB equations.
inline Eigen::VectorXd conditional_backward_derivative(const LqtProblem& p, double s, const Eigen::VectorXd& y) {
  const Eigen::Index n = p.nx;
  const CondValueParams e = detail::unpack_cond(y, n, s, s);
  const LqtCoefficients k = coefficients_at(p, s);
  const MatrixXd AK = e.A * k.K;
  const MatrixXd JK = e.J * k.K;
  const MatrixXd dA = AK * e.J - e.A * k.F;
  const VectorXd db = -AK * e.eta - e.A * k.c;
  const MatrixXd dC = -AK * e.A.transpose();
  const VectorXd deta = -k.q - k.F.transpose() * e.eta + e.J * k.c + JK * e.eta;
  const MatrixXd dJ = -k.Q - e.J * k.F - k.F.transpose() * e.J + JK * e.J;
  return detail::pack_derivatives(dA, db, dC, deta, dJ);
}

/// d/dtau of (A, b, C, eta, J)(s, tau): the forward conditional HJB equations.
inline Eigen::VectorXd conditional_forward_derivative(const LqtProblem& p, double tau, const Eigen::VectorXd& y) {
  const Eigen::Index n = p.nx;
  const CondValueParams e = detail::unpack_cond(y, n, tau, tau);
  const LqtCoefficients k = coefficients_at(p, tau);
  const MatrixXd CQ = e.C * k.Q;
  const MatrixXd AtQ = e.A.transpose() * k.Q;
  const MatrixXd dA = -CQ * e.A + k.F * e.A;
  const VectorXd db = e.C * k.q + k.F * e.b - CQ * e.b + k.c;
  const MatrixXd dC = -CQ * e.C + k.K + k.F * e.C + e.C * k.F.transpose();
  const VectorXd deta = e.A.transpose() * k.q - AtQ * e.b;
  const MatrixXd dJ = AtQ * e.A;
  return detail::pack_derivatives(dA, db, dC, deta, dJ);
}

namespace detail {

inline std::vector<double> uniform_times(double from, double to, int steps) {
  std::vector<double> t(steps + 1);
  for (int i = 0; i <= steps; ++i) t[i] = i == steps ? to : from + i * (to - from) / steps;
  return t;
}

inline void rethrow_with_block(const NonFiniteError& err, int block) {
  throw NonFiniteError("block " + std::to_string(block) + ": " + err.what(), err.time(), err.component());
}

}  // namespace detail

/// Element on [s, tau] from the backward equations, integrated from tau down
/// to s in `steps` RK4 steps starting at the identity.
inline CondValueParams init_element_backward(const LqtProblem& p, double s, double tau, int steps,
                                             int block = -1) {
  const Eigen::Index n = p.nx;
  CondValueParams id = CondValueParams::identity(p.nx, tau);
  if (s == tau) return id;
  const auto times = detail::uniform_times(tau, s, steps);
  auto f = [&p](double t, const Eigen::VectorXd& y) { return conditional_backward_derivative(p, t, y); };
  auto project = [n](Eigen::VectorXd& y) { detail::symmetrize_cond_state(y, n); };
  try {
    const auto states = integrate_over(f, std::span<const double>(times), detail::pack_cond(id), project);
    return detail::unpack_cond(states.back(), n, s, tau);
  } catch (const NonFiniteError& err) {
    detail::rethrow_with_block(err, block);
  }
  return id;
}

/// Element on [s, tau] from the forward equations, integrated from s up to tau.
inline CondValueParams init_element_forward(const LqtProblem& p, double s, double tau, int steps,
                                            int block = -1) {
  const Eigen::Index n = p.nx;
  CondValueParams id = CondValueParams::identity(p.nx, s);
  if (s == tau) return id;
  const auto times = detail::uniform_times(s, tau, steps);
  auto f = [&p](double t, const Eigen::VectorXd& y) { return conditional_forward_derivative(p, t, y); };
  auto project = [n](Eigen::VectorXd& y) { detail::symmetrize_cond_state(y, n); };
  try {
    const auto states = integrate_over(f, std::span<const double>(times), detail::pack_cond(id), project);
    return detail::unpack_cond(states.back(), n, s, tau);
  } catch (const NonFiniteError& err) {
    detail::rethrow_with_block(err, block);
  }
  return id;
}

/// Integrates the forward equations from `start` (an element on [s, t_a]) across
/// `node_times` (node_times.front() == t_a), returning the element [s, t] at
/// every node. Used to fill in V(., t0; ., t) inside a block.
inline std::vector<CondValueParams> extend_forward(const LqtProblem& p, const CondValueParams& start,
                                                   const std::vector<double>& node_times) {
  const Eigen::Index n = p.nx;
  auto f = [&p](double t, const Eigen::VectorXd& y) { return conditional_forward_derivative(p, t, y); };
  auto project = [n](Eigen::VectorXd& y) { detail::symmetrize_cond_state(y, n); };
  const auto states = integrate_over(f, std::span<const double>(node_times), detail::pack_cond(start), project);
  std::vector<CondValueParams> out;
  out.reserve(states.size());
  out.push_back(start);
  for (std::size_t i = 1; i < states.size(); ++i) out.push_back(detail::unpack_cond(states[i], n, start.s, node_times[i]));
  return out;
}

/// a_T: the terminal cost as an element on [tf, tf+].
inline CondValueParams final_element(const LqtProblem& p, double tf) {
  const Eigen::Index n = p.nx;
  const ValueParams term = terminal_value(p, tf);
  return CondValueParams{MatrixXd::Zero(n, n), VectorXd::Zero(n), MatrixXd::Zero(n, n), term.v, term.S, tf, tf, true};
}

/// Associative combination of [s, tau] with [tau, t]. Inverses of (I + C1 J2)
/// and its transpose (I + J2 C1) come from one partial-pivot LU factorisation.
inline CondValueParams combine(const CondValueParams& e1, const CondValueParams& e2) {
  if (e1.terminal) throw std::invalid_argument("combine: left element already includes the terminal cost");
  const double tol = 1e-9 * std::max({1.0, std::abs(e1.tau), std::abs(e2.s)});
  if (std::abs(e1.tau - e2.s) > tol) {
    throw std::invalid_argument("combine: intervals are not adjacent (" + std::to_string(e1.tau) + " vs " +
                                std::to_string(e2.s) + ")");
  }
  const Eigen::Index n = e1.dim();
  const MatrixXd M = MatrixXd::Identity(n, n) + e1.C * e2.J;
  const Eigen::PartialPivLU<MatrixXd> lu(M);
  const double rcond = lu_rcond(lu);
  if (!(rcond > 1.0 / kMaxConditionEstimate)) {
    const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    throw IllConditionedError("combine: I + C1 J2 is singular or ill-conditioned (condition estimate " +
                                  std::to_string(cond) + ")",
                              cond);
  }
  // A2 (I + C1 J2)^-1 = ((I + J2 C1)^-1 A2')'
  const MatrixXd A2t = e2.A.transpose();
  const MatrixXd A2M_t = lu.transpose().solve(A2t);
  const MatrixXd A2M = A2M_t.transpose();
  // A1' (I + J2 C1)^-1 = ((I + C1 J2)^-1 A1)'
  const MatrixXd A1tM_t = lu.solve(e1.A);
  const MatrixXd A1tM = A1tM_t.transpose();

  CondValueParams out;
  out.A = A2M * e1.A;
  out.b = A2M * (e1.b + e1.C * e2.eta) + e2.b;
  out.C = symmetrize(A2M * e1.C * e2.A.transpose() + e2.C);
  out.eta = A1tM * (e2.eta - e2.J * e1.b) + e1.eta;
  out.J = symmetrize(A1tM * e2.J * e1.A + e1.J);
  out.s = e1.s;
  out.tau = e2.tau;
  out.terminal = e2.terminal;
  return out;
}

/// Per-block elements a_0 .. a_{T-1}, computed independently.
inline std::vector<CondValueParams> block_elements(const LqtProblem& p, const TimeGrid& grid, ElementInit init,
                                                   const Execution& exec) {
  std::vector<CondValueParams> elems(grid.num_blocks);
  const int steps = kSubstepsPerGridStep * grid.steps_per_block;
  exec.for_each(elems.size(), [&](std::size_t j) {
    const int b = static_cast<int>(j);
    elems[j] = init == ElementInit::kBackward ? init_element_backward(p, grid.edge(b), grid.edge(b + 1), steps, b)
                                              : init_element_forward(p, grid.edge(b), grid.edge(b + 1), steps, b);
  });
  return elems;
}

struct BackwardPassResult {
  std::vector<CondValueParams> elements;  // a_0 .. a_T (a_T terminal)
  std::vector<CondValueParams> suffixes;  // a_k (+) ... (+) a_T
  std::vector<ValueParams> edge_values;   // S(t_k), v(t_k), k = 0..T
  ScanStats stats;
};

/// Reverse scan over the block elements and the terminal element; the value
/// function at each block edge is read off the suffix (J = S, eta = v).
inline BackwardPassResult backward_value_pass(const LqtProblem& p, const TimeGrid& grid, const Execution& exec,
                                              ElementInit init = ElementInit::kBackward,
                                              const std::vector<CondValueParams>* precomputed = nullptr) {
  BackwardPassResult r;
  r.elements = precomputed ? *precomputed : block_elements(p, grid, init, exec);
  r.elements.push_back(final_element(p, grid.tf));
  const ScanPlan plan{r.elements.size(), ScanDirection::kReverse, exec.backend};
  r.suffixes = inclusive_scan(r.elements, combine, plan, exec.pool, std::optional<CondValueParams>{}, &r.stats);
  r.edge_values.reserve(r.suffixes.size());
  for (std::size_t k = 0; k < r.suffixes.size(); ++k) {
    const CondValueParams& e = r.suffixes[k];
    const double scale = std::max(1.0, e.J.cwiseAbs().maxCoeff());
    const double residual =
        std::max({e.A.cwiseAbs().maxCoeff(), e.b.cwiseAbs().maxCoeff(), e.C.cwiseAbs().maxCoeff()});
    if (!(residual <= 1e-9 * scale)) {
      throw SolverError("backward pass: suffix " + std::to_string(k) + " has non-zero A/b/C (" +
                        std::to_string(residual) + ")");
    }
    r.edge_values.push_back(ValueParams{e.J, e.eta, grid.edge(static_cast<int>(k))});
  }
  return r;
}

struct ForwardPassResult {
  std::vector<CondValueParams> elements;  // a_0 .. a_{T-1}
  std::vector<CondValueParams> prefixes;  // V(., t0; ., t_{k+1})
  ScanStats stats;
};

inline ForwardPassResult forward_conditional_pass(const LqtProblem& p, const TimeGrid& grid, const Execution& exec,
                                                  ElementInit init = ElementInit::kBackward,
                                                  const std::vector<CondValueParams>* precomputed = nullptr) {
  ForwardPassResult r;
  r.elements = precomputed ? *precomputed : block_elements(p, grid, init, exec);
  const ScanPlan plan{r.elements.size(), ScanDirection::kForward, exec.backend};
  r.prefixes = inclusive_scan(r.elements, combine, plan, exec.pool, std::optional<CondValueParams>{}, &r.stats);
  return r;
}

/// S, v inside block j from the Riccati ODEs, started at the edge value at t_{j+1}.
inline ValueSequence densify_block(const LqtProblem& p, const ValueParams& edge_value, const TimeGrid& grid,
                                   int block) {
  ValueParams end = edge_value;
  const auto times = grid.block_times(block);
  end.t = times.back();
  return riccati_backward_over(p, times, end);
}

/// Dense S, v over the whole grid. Block edges carry the scan values.
inline ValueSequence densify_all(const LqtProblem& p, const TimeGrid& grid,
                                 const std::vector<ValueParams>& edge_values, const Execution& exec) {
  std::vector<ValueSequence> blocks(grid.num_blocks);
  exec.for_each(blocks.size(), [&](std::size_t j) {
    const int b = static_cast<int>(j);
    blocks[j] = densify_block(p, edge_values[b + 1], grid, b);
  });
  ValueSequence out;
  out.samples.reserve(2 * grid.num_steps() + 1);
  for (int j = 0; j < grid.num_blocks; ++j) {
    auto& s = blocks[j].samples;
    s.front() = edge_values[j];
    s.front().t = grid.edge(j);
    out.samples.insert(out.samples.end(), s.begin(), s.end() - 1);
  }
  out.samples.push_back(edge_values.back());
  out.samples.back().t = grid.tf;
  return out;
}

}  // namespace hjbscan
