#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hjbscan/error.hpp"
#include "hjbscan/jet.hpp"
#include "hjbscan/model.hpp"
#include "hjbscan/parallel.hpp"
#include "hjbscan/scan.hpp"
#include "hjbscan/sqp.hpp"

namespace hjbscan {

/// Absorbing +inf used for unreachable pairs; sums saturate.
inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Grids and grid-valued functions
// ---------------------------------------------------------------------------

struct StateGrid {
  double x_min = -1.0;
  double x_max = 1.0;
  int num_points = 3;

  double spacing() const { return (x_max - x_min) / (num_points - 1); }
  double point(int i) const { return i == num_points - 1 ? x_max : x_min + i * spacing(); }
  bool contains(double x, double tol = 1e-12) const {
    const double slack = tol * std::max(1.0, x_max - x_min);
    return x >= x_min - slack && x <= x_max + slack;
  }
};

inline StateGrid make_state_grid(double x_min, double x_max, int num_points) {
  if (num_points < 3) throw std::invalid_argument("state grid: need at least 3 points");
  if (!(x_max > x_min)) throw std::invalid_argument("state grid: need x_max > x_min");
  return StateGrid{x_min, x_max, num_points};
}

/// V(x_i, t) on a state grid.
struct GridValueFn {
  StateGrid grid;
  Eigen::VectorXd values;
  double t = 0.0;
};

/// V(x_i, s; x_k, tau). When `terminal` is set the element already contains
/// the terminal cost and `values` has a single column V(x_i, s).
struct GridCondValueFn {
  StateGrid grid;
  Eigen::MatrixXd values;
  double s = 0.0;
  double tau = 0.0;
  bool terminal = false;

  /// Zero-length element: 0 on the diagonal, unreachable elsewhere.
  static GridCondValueFn identity(const StateGrid& grid, double t) {
    Eigen::MatrixXd v = Eigen::MatrixXd::Constant(grid.num_points, grid.num_points, kUnreachable);
    v.diagonal().setZero();
    return GridCondValueFn{grid, v, t, t, false};
  }
};

// ---------------------------------------------------------------------------
// Problem family
// ---------------------------------------------------------------------------

/// dx/dt = c0 + c1 x + c2 x^2 + g u,  l = qx/2 x^2 + ru/2 u^2,  phi = pf/2 x^2.
struct NonlinearScalarProblem {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double g = 1.0;
  double qx = 1.0;
  double ru = 1.0;
  double pf = 0.0;

  template <class T>
  T dynamics(const T& x, const T& u) const {
    return c0 + c1 * x + c2 * (x * x) + g * u;
  }
  template <class T>
  T running_cost(const T& x, const T& u) const {
    return 0.5 * qx * (x * x) + 0.5 * ru * (u * u);
  }
  double terminal_cost(double x) const { return 0.5 * pf * x * x; }

  /// argmin_u l(x,u) + p f(x,u).
  double optimal_control(double p) const { return -g * p / ru; }
  /// Control that holds the state still.
  double zero_drift_control(double x) const { return -(c0 + c1 * x + c2 * x * x) / g; }

  void validate() const {
    if (!(ru > 0.0)) throw std::invalid_argument("nonlinear problem: control weight must be positive");
    if (g == 0.0) throw std::invalid_argument("nonlinear problem: control gain must be non-zero");
    if (qx < 0.0 || pf < 0.0) throw std::invalid_argument("nonlinear problem: state weights must be non-negative");
  }
};

/// 1 - x^2/10 + u with l = x^2/2 + u^2/2 and phi = 2 x^2.
inline NonlinearScalarProblem falling_body_problem() { return NonlinearScalarProblem{1.0, 0.0, -0.1, 1.0, 1.0, 1.0, 4.0}; }

/// x + u with l = x^2/2 + u^2/2 and phi = Sf/2 x^2: the scalar LQR problem.
inline NonlinearScalarProblem scalar_lqr_nonlinear(double terminal_weight) {
  return NonlinearScalarProblem{0.0, 1.0, 0.0, 1.0, 1.0, 1.0, terminal_weight};
}

// ---------------------------------------------------------------------------
// Multiple direct shooting
// ---------------------------------------------------------------------------

struct ShootingResult {
  double cost = kUnreachable;
  bool reachable = false;
  bool out_of_range = false;
  SqpDiagnostics sqp;
};

namespace detail {

/// Variables: s_1..s_n (node states, s_0 is fixed), then (u0_m, u1_m) per
/// interval, the control being linear from u0_m to u1_m across interval m.
/// Constraints: n matching conditions, n-1 control continuity conditions and
/// the terminal condition s_n = z.
struct ShootingLayout {
  int n;
  int num_vars() const { return 3 * n; }
  int num_constraints() const { return 2 * n; }
  int state(int m) const { return m - 1; }  // m >= 1
  int u_start(int m) const { return n + 2 * m; }
  int u_end(int m) const { return n + 2 * m + 1; }
};

struct IntervalJets {
  Jet2<3> x_end;
  Jet2<3> cost;
};

/// One RK4 step of (x, accumulated cost) across an interval of length h with
/// jet variables (s_m, u0_m, u1_m).
inline IntervalJets shoot_interval(const NonlinearScalarProblem& p, double s, double u0, double u1, double h) {
  using J = Jet2<3>;
  const J x0 = J::variable(s, 0);
  const J a = J::variable(u0, 1);
  const J b = J::variable(u1, 2);
  const J u_mid = 0.5 * (a + b);
  auto fx = [&p](const J& x, const J& u) { return p.dynamics(x, u); };
  auto fl = [&p](const J& x, const J& u) { return p.running_cost(x, u); };
  const J k1x = fx(x0, a), k1l = fl(x0, a);
  const J x2 = x0 + (0.5 * h) * k1x;
  const J k2x = fx(x2, u_mid), k2l = fl(x2, u_mid);
  const J x3 = x0 + (0.5 * h) * k2x;
  const J k3x = fx(x3, u_mid), k3l = fl(x3, u_mid);
  const J x4 = x0 + h * k3x;
  const J k4x = fx(x4, b), k4l = fl(x4, b);
  return IntervalJets{x0 + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
                      (h / 6.0) * (k1l + 2.0 * k2l + 2.0 * k3l + k4l)};
}

inline void evaluate_shooting(const NonlinearScalarProblem& p, const ShootingLayout& lay, double x_start,
                              double x_end, double h, const Eigen::VectorXd& q, const Eigen::VectorXd& lambda,
                              SqpEvaluation& out) {
  const int n = lay.n, nv = lay.num_vars(), nc = lay.num_constraints();
  out.objective = 0.0;
  out.gradient = Eigen::VectorXd::Zero(nv);
  out.constraints = Eigen::VectorXd::Zero(nc);
  out.jacobian = Eigen::MatrixXd::Zero(nc, nv);
  out.hessian = Eigen::MatrixXd::Zero(nv, nv);
  for (int m = 0; m < n; ++m) {
    const double s = m == 0 ? x_start : q[lay.state(m)];
    const IntervalJets jet = shoot_interval(p, s, q[lay.u_start(m)], q[lay.u_end(m)], h);
    // Local variable k of this interval -> global index (-1 when fixed).
    const int idx[3] = {m == 0 ? -1 : lay.state(m), lay.u_start(m), lay.u_end(m)};
    out.objective += jet.cost.v;
    const double mu = lambda[m];
    for (int a = 0; a < 3; ++a) {
      if (idx[a] < 0) continue;
      out.gradient[idx[a]] += jet.cost.g[a];
      out.jacobian(m, idx[a]) += jet.x_end.g[a];
      for (int b = 0; b < 3; ++b) {
        if (idx[b] < 0) continue;
        out.hessian(idx[a], idx[b]) += jet.cost.h[a][b] + mu * jet.x_end.h[a][b];
      }
    }
    out.constraints[m] = jet.x_end.v - q[lay.state(m + 1)];
    out.jacobian(m, lay.state(m + 1)) -= 1.0;
  }
  for (int m = 0; m + 1 < n; ++m) {
    out.constraints[n + m] = q[lay.u_end(m)] - q[lay.u_start(m + 1)];
    out.jacobian(n + m, lay.u_end(m)) = 1.0;
    out.jacobian(n + m, lay.u_start(m + 1)) = -1.0;
  }
  out.constraints[2 * n - 1] = q[lay.state(n)] - x_end;
  out.jacobian(2 * n - 1, lay.state(n)) = 1.0;
}

}  // namespace detail

/// Minimum cost of steering x_start at the start of a block of length
/// `block_length` to x_end at its end, by multiple direct shooting over `n`
/// intervals. Pairs whose solution leaves the grid range, or where the SQP
/// does not converge, are reported unreachable.
inline ShootingResult shoot_conditional_value(const NonlinearScalarProblem& p, const StateGrid& grid, double x_start,
                                              double x_end, double block_length, int n,
                                              const SqpOptions& options = {}) {
  if (n < 1) throw std::invalid_argument("shooting: need at least one interval");
  if (!(block_length > 0.0)) throw std::invalid_argument("shooting: block length must be positive");
  const detail::ShootingLayout lay{n};
  const double h = block_length / n;

  // Straight-line start: states on the chord, controls that follow it.
  Eigen::VectorXd q0(lay.num_vars());
  const double slope = (x_end - x_start) / block_length;
  auto chord = [&](int m) { return x_start + (x_end - x_start) * m / n; };
  auto follow = [&](int m) { return (slope - p.dynamics(chord(m), 0.0)) / p.g; };
  for (int m = 1; m <= n; ++m) q0[lay.state(m)] = chord(m);
  for (int m = 0; m < n; ++m) {
    q0[lay.u_start(m)] = follow(m);
    q0[lay.u_end(m)] = follow(m + 1);
  }

  auto model = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& lambda, SqpEvaluation& out) {
    detail::evaluate_shooting(p, lay, x_start, x_end, h, q, lambda, out);
  };
  const SqpResult sol = sqp_solve_equality(model, q0, lay.num_constraints(), options);

  ShootingResult r;
  r.sqp = sol.diagnostics;
  if (!sol.diagnostics.converged) return r;
  for (int m = 1; m <= n; ++m) {
    if (!grid.contains(sol.q[lay.state(m)])) {
      r.out_of_range = true;
      return r;
    }
  }
  r.cost = sol.objective;
  r.reachable = true;
  return r;
}

struct ElementDiagnostics {
  long pairs = 0;
  long converged = 0;
  long out_of_range = 0;
  long failed = 0;
  double max_constraint_violation = 0.0;  // over converged pairs
  double max_stationarity = 0.0;          // over converged pairs
};

struct BlockElement {
  GridCondValueFn element;
  ElementDiagnostics diagnostics;
};

/// V(x_i, s; x_k, s + block_length) for every grid pair, in parallel over pairs.
inline BlockElement build_block_element(const NonlinearScalarProblem& p, const StateGrid& grid, double s,
                                        double block_length, int n, const Execution& exec,
                                        const SqpOptions& options = {}) {
  const int M = grid.num_points;
  if (block_length == 0.0) return BlockElement{GridCondValueFn::identity(grid, s), {}};
  std::vector<ShootingResult> results(static_cast<std::size_t>(M) * M);
  exec.for_each(results.size(), [&](std::size_t idx) {
    const int i = static_cast<int>(idx / M), k = static_cast<int>(idx % M);
    results[idx] = shoot_conditional_value(p, grid, grid.point(i), grid.point(k), block_length, n, options);
  });
  BlockElement out;
  out.element = GridCondValueFn{grid, Eigen::MatrixXd(M, M), s, s + block_length, false};
  ElementDiagnostics& d = out.diagnostics;
  d.pairs = static_cast<long>(results.size());
  for (std::size_t idx = 0; idx < results.size(); ++idx) {
    const ShootingResult& r = results[idx];
    out.element.values(static_cast<Eigen::Index>(idx / M), static_cast<Eigen::Index>(idx % M)) = r.cost;
    if (r.sqp.converged) {
      ++d.converged;
      d.max_constraint_violation = std::max(d.max_constraint_violation, r.sqp.constraint_violation);
      d.max_stationarity = std::max(d.max_stationarity, r.sqp.stationarity);
    } else {
      ++d.failed;
    }
    if (r.out_of_range) ++d.out_of_range;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interpolated grid combination
// ---------------------------------------------------------------------------

/// Minimum of g + f near x_i from the quadratic interpolants through the
/// triplets at x_{i-1}, x_i, x_{i+1}. Never above g_i + f_i.
inline double quad_interp_min(const double (&g)[3], const double (&f)[3], double delta) {
  const double raw = g[1] + f[1];
  for (int k = 0; k < 3; ++k) {
    if (!std::isfinite(g[k]) || !std::isfinite(f[k])) return raw;
  }
  const double bg = (g[2] - g[0]) / (2.0 * delta);
  const double ag = (g[2] + g[0] - 2.0 * g[1]) / (2.0 * delta * delta);
  const double bf = (f[2] - f[0]) / (2.0 * delta);
  const double af = (f[2] + f[0] - 2.0 * f[1]) / (2.0 * delta * delta);
  const double a = ag + af, b = bg + bf;
  if (!(a > 0.0)) return raw;
  return std::min(raw, raw - b * b / (4.0 * a));
}

/// e1 then e2: out(i,k) = min_m e1(i,m) + e2(m,k), refined by quad_interp_min
/// when the grid argmin is interior. Unreachable terms never win; ties go to
/// the lowest index. e2 may be terminal (single column), and so is the result.
inline GridCondValueFn grid_combine(const GridCondValueFn& e1, const GridCondValueFn& e2,
                                    const Execution& exec = {}) {
  if (e1.terminal) throw std::invalid_argument("grid_combine: left element already includes the terminal cost");
  if (e1.grid.num_points != e2.grid.num_points || e1.grid.x_min != e2.grid.x_min ||
      e1.grid.x_max != e2.grid.x_max) {
    throw std::invalid_argument("grid_combine: elements live on different state grids");
  }
  const double tol = 1e-9 * std::max({1.0, std::abs(e1.tau), std::abs(e2.s)});
  if (std::abs(e1.tau - e2.s) > tol) throw std::invalid_argument("grid_combine: intervals are not adjacent");

  const Eigen::Index M = e1.values.rows(), K = e2.values.cols();
  const double delta = e1.grid.spacing();
  GridCondValueFn out{e1.grid, Eigen::MatrixXd(M, K), e1.s, e2.tau, e2.terminal};
  exec.for_each(static_cast<std::size_t>(M), [&](std::size_t ii) {
    const Eigen::Index i = static_cast<Eigen::Index>(ii);
    for (Eigen::Index k = 0; k < K; ++k) {
      Eigen::Index best = -1;
      double best_sum = kUnreachable;
      for (Eigen::Index m = 0; m < M; ++m) {
        const double a = e1.values(i, m), b = e2.values(m, k);
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        if (best < 0 || a + b < best_sum) {
          best = m;
          best_sum = a + b;
        }
      }
      if (best > 0 && best < M - 1) {
        const double g[3] = {e1.values(i, best - 1), e1.values(i, best), e1.values(i, best + 1)};
        const double f[3] = {e2.values(best - 1, k), e2.values(best, k), e2.values(best + 1, k)};
        best_sum = quad_interp_min(g, f, delta);
      }
      out.values(i, k) = best_sum;
    }
  });
  return out;
}

/// The terminal cost as a single-column terminal element at tf.
inline GridCondValueFn terminal_grid_element(const NonlinearScalarProblem& p, const StateGrid& grid, double tf) {
  Eigen::MatrixXd v(grid.num_points, 1);
  for (int i = 0; i < grid.num_points; ++i) v(i, 0) = p.terminal_cost(grid.point(i));
  return GridCondValueFn{grid, v, tf, tf, true};
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Value functions at the block edges t_0..t_T from a reverse scan over the
/// block elements and the terminal cost. `blocks` holds either one element
/// (time-invariant problem, reused for every block) or one per block.
inline std::vector<GridValueFn> nl_parallel_solve(const NonlinearScalarProblem& p, const StateGrid& grid,
                                                  const TimeGrid& time_grid,
                                                  const std::vector<GridCondValueFn>& blocks, const Execution& exec,
                                                  ScanStats* stats = nullptr) {
  const int T = time_grid.num_blocks;
  if (blocks.size() != 1 && blocks.size() != static_cast<std::size_t>(T)) {
    throw std::invalid_argument("nl_parallel_solve: need one element or one per block");
  }
  std::vector<GridCondValueFn> seq;
  seq.reserve(T + 1);
  for (int j = 0; j < T; ++j) {
    GridCondValueFn e = blocks.size() == 1 ? blocks.front() : blocks[j];
    e.s = time_grid.edge(j);
    e.tau = time_grid.edge(j + 1);
    seq.push_back(std::move(e));
  }
  seq.push_back(terminal_grid_element(p, grid, time_grid.tf));
  const ScanPlan plan{seq.size(), ScanDirection::kReverse, exec.backend};
  auto combine = [&exec](const GridCondValueFn& a, const GridCondValueFn& b) { return grid_combine(a, b, exec); };
  const auto suffixes = inclusive_scan(seq, combine, plan, exec.pool, std::optional<GridCondValueFn>{}, stats);
  std::vector<GridValueFn> out;
  out.reserve(suffixes.size());
  for (int k = 0; k <= T; ++k) out.push_back(GridValueFn{grid, suffixes[k].values.col(0), time_grid.edge(k)});
  return out;
}

/// Explicit first-order upwind scheme for -dV/dt = min_u l + f dV/dx,
/// stepping backward from phi with `substeps_per_block` steps per block and
/// returning V at the block edges t_0..t_T. The one-sided difference is taken
/// on the side the optimal drift comes from; when neither side is consistent
/// the state is held (zero-drift control).
inline std::vector<GridValueFn> upwind_solve(const NonlinearScalarProblem& p, const StateGrid& grid,
                                             const TimeGrid& time_grid, int substeps_per_block) {
  if (substeps_per_block < 1) throw std::invalid_argument("upwind: need at least one step per block");
  const int M = grid.num_points;
  const double dx = grid.spacing();
  std::vector<double> x(M);
  for (int i = 0; i < M; ++i) x[i] = grid.point(i);

  Eigen::VectorXd V(M);
  for (int i = 0; i < M; ++i) V[i] = p.terminal_cost(x[i]);
  std::vector<GridValueFn> out(time_grid.num_blocks + 1);
  out.back() = GridValueFn{grid, V, time_grid.tf};

  Eigen::VectorXd next(M);
  for (int j = time_grid.num_blocks - 1; j >= 0; --j) {
    const double dt = (time_grid.edge(j + 1) - time_grid.edge(j)) / substeps_per_block;
    for (int step = 0; step < substeps_per_block; ++step) {
      double max_speed = 0.0;
      for (int i = 0; i < M; ++i) {
        auto hamiltonian = [&](double u, double grad) { return p.running_cost(x[i], u) + p.dynamics(x[i], u) * grad; };
        const bool has_fwd = i + 1 < M, has_bwd = i > 0;
        const double grad_f = has_fwd ? (V[i + 1] - V[i]) / dx : 0.0;
        const double grad_b = has_bwd ? (V[i] - V[i - 1]) / dx : 0.0;
        const double uf = p.optimal_control(grad_f), ub = p.optimal_control(grad_b);
        const double drift_f = p.dynamics(x[i], uf), drift_b = p.dynamics(x[i], ub);
        const bool fwd_ok = has_fwd && (drift_f > 0.0 || !has_bwd);
        const bool bwd_ok = has_bwd && (drift_b < 0.0 || !has_fwd);
        double H, speed;
        if (fwd_ok && bwd_ok) {
          const double Hf = hamiltonian(uf, grad_f), Hb = hamiltonian(ub, grad_b);
          H = std::min(Hf, Hb);
          speed = Hf <= Hb ? std::abs(drift_f) : std::abs(drift_b);
        } else if (fwd_ok) {
          H = hamiltonian(uf, grad_f);
          speed = std::abs(drift_f);
        } else if (bwd_ok) {
          H = hamiltonian(ub, grad_b);
          speed = std::abs(drift_b);
        } else {
          H = p.running_cost(x[i], p.zero_drift_control(x[i]));
          speed = 0.0;
        }
        max_speed = std::max(max_speed, speed);
        next[i] = V[i] + dt * H;
      }
      if (max_speed * dt > dx) {
        throw SolverError("upwind: time step " + std::to_string(dt) + " violates the CFL condition; maximum stable step is " +
                          std::to_string(dx / max_speed));
      }
      V.swap(next);
    }
    out[j] = GridValueFn{grid, V, time_grid.edge(j)};
  }
  return out;
}

/// max_{k,i} |a_k(x_i) - b_k(x_i)| over entries finite in both.
inline double max_abs_gap(const std::vector<GridValueFn>& a, const std::vector<GridValueFn>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_gap: length mismatch");
  double gap = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (Eigen::Index i = 0; i < a[k].values.size(); ++i) {
      const double u = a[k].values[i], v = b[k].values[i];
      if (std::isfinite(u) && std::isfinite(v)) gap = std::max(gap, std::abs(u - v));
    }
  }
  return gap;
}

}  // namespace hjbscan
