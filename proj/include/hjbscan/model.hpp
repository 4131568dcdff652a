#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hjbscan/error.hpp"

namespace hjbscan {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using MatrixFn = std::function<MatrixXd(double)>;
using VectorFn = std::function<VectorXd(double)>;

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

/// Reciprocal condition estimate that also catches exactly zero pivots,
/// which Eigen's estimator can miss.
inline double lu_rcond(const Eigen::PartialPivLU<MatrixXd>& lu) {
  if (lu.rows() == 0) return 1.0;
  const VectorXd piv = lu.matrixLU().diagonal().cwiseAbs();
  const double ratio = piv.minCoeff() / piv.maxCoeff();
  if (!(ratio > 0.0) || !std::isfinite(ratio)) return 0.0;
  return std::min(lu.rcond(), ratio);
}

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

/// Uniform grid of `num_blocks` blocks with `steps_per_block` RK4 steps each.
///
/// Global point k lives in block k / n at sub-step k % n. Times are always
/// computed from the block edges so that block-local and global code paths see
/// bit-identical time values.
struct TimeGrid {
  double t0 = 0.0;
  double tf = 1.0;
  int num_blocks = 1;
  int steps_per_block = 1;

  int num_points() const { return num_blocks * steps_per_block + 1; }
  int num_steps() const { return num_blocks * steps_per_block; }
  double block_width() const { return (tf - t0) / num_blocks; }

  double edge(int j) const {
    if (j >= num_blocks) return tf;
    return t0 + j * (tf - t0) / num_blocks;
  }

  double time(int k) const {
    const int j = k / steps_per_block;
    const int i = k % steps_per_block;
    if (i == 0) return edge(j);
    return edge(j) + i * (edge(j + 1) - edge(j)) / steps_per_block;
  }

  std::vector<double> times() const {
    std::vector<double> out(num_points());
    for (int k = 0; k < num_points(); ++k) out[k] = time(k);
    return out;
  }

  /// Block j's n+1 sample times, first and last equal to the block edges.
  std::vector<double> block_times(int j) const {
    std::vector<double> out(steps_per_block + 1);
    for (int i = 0; i <= steps_per_block; ++i) out[i] = time(j * steps_per_block + i);
    return out;
  }
};

inline TimeGrid make_uniform_grid(double t0, double tf, int num_blocks, int steps_per_block) {
  if (!(tf > t0)) throw std::invalid_argument("time grid: need tf > t0");
  if (num_blocks < 1) throw std::invalid_argument("time grid: need at least one block");
  if (steps_per_block < 1) throw std::invalid_argument("time grid: need at least one step per block");
  return TimeGrid{t0, tf, num_blocks, steps_per_block};
}

/// Sample times with an extra midpoint between every pair of `nodes`.
inline std::vector<double> with_midpoints(const std::vector<double>& nodes) {
  std::vector<double> out;
  out.reserve(2 * nodes.size() - 1);
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    out.push_back(nodes[k]);
    out.push_back(nodes[k] + 0.5 * (nodes[k + 1] - nodes[k]));
  }
  out.push_back(nodes.back());
  return out;
}

/// RK4 steps taken per grid step by every fine integration (Riccati sweeps,
/// element initialisation, conditional densification). A power of two >= 2,
/// so grid midpoints are always integration points.
inline constexpr int kSubstepsPerGridStep = 4;

/// `nodes` with each interval split into `factor` equal parts (factor a power of two).
inline std::vector<double> refine_times(std::vector<double> nodes, int factor) {
  for (int r = 1; r < factor; r *= 2) nodes = with_midpoints(nodes);
  return nodes;
}

// ---------------------------------------------------------------------------
// Linear quadratic tracking problem
// ---------------------------------------------------------------------------

/// dx/dt = F x + L u + c,
/// cost  = 1/2 (Hf x - rf)' Xf (Hf x - rf)
///       + int 1/2 (r - H x)' X (r - H x) + 1/2 u' U u dt.
///
/// The terminal reference rf has the row dimension of Hf, which need not equal
/// the running-cost output dimension.
struct LqtProblem {
  int nx = 0;
  int nu = 0;
  int nr = 0;
  MatrixFn F;
  MatrixFn L;
  VectorFn c;
  MatrixFn H;
  MatrixFn X;
  MatrixFn U;
  VectorFn r;
  MatrixXd Hf;
  MatrixXd Xf;
  VectorXd rf;
  VectorXd x0;

  static LqtProblem constant(const MatrixXd& F, const MatrixXd& L, const VectorXd& c,
                             const MatrixXd& H, const MatrixXd& X, const MatrixXd& U,
                             const VectorXd& r, const MatrixXd& Hf, const MatrixXd& Xf,
                             const VectorXd& rf, const VectorXd& x0) {
    LqtProblem p;
    p.nx = static_cast<int>(F.rows());
    p.nu = static_cast<int>(L.cols());
    p.nr = static_cast<int>(H.rows());
    p.F = [F](double) { return F; };
    p.L = [L](double) { return L; };
    p.c = [c](double) { return c; };
    p.H = [H](double) { return H; };
    p.X = [X](double) { return X; };
    p.U = [U](double) { return U; };
    p.r = [r](double) { return r; };
    p.Hf = Hf;
    p.Xf = Xf;
    p.rf = rf;
    p.x0 = x0;
    return p;
  }

  /// Checks dimensions, symmetry (1e-12) and definiteness of the weights at `t`.
  void validate(double t) const;
};

/// Coefficients of an LqtProblem frozen at one time, plus the products every
/// solver needs: K = L U^-1 L', Q = H' X H, q = H' X r.
struct LqtCoefficients {
  MatrixXd F;
  MatrixXd L;
  VectorXd c;
  MatrixXd U;
  MatrixXd K;
  MatrixXd Q;
  VectorXd q;
  Eigen::LLT<MatrixXd> U_chol;
};

inline LqtCoefficients coefficients_at(const LqtProblem& p, double t) {
  LqtCoefficients k;
  k.F = p.F(t);
  k.L = p.L(t);
  k.c = p.c(t);
  k.U = p.U(t);
  k.U_chol.compute(k.U);
  if (k.U_chol.info() != Eigen::Success) {
    throw SolverError("control weight U(t) is not positive definite at t=" + std::to_string(t));
  }
  k.K = symmetrize(k.L * k.U_chol.solve(k.L.transpose()));
  const MatrixXd H = p.H(t);
  const MatrixXd HtX = H.transpose() * p.X(t);
  k.Q = symmetrize(HtX * H);
  k.q = HtX * p.r(t);
  return k;
}

inline void LqtProblem::validate(double t) const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("LQT problem: " + msg);
  };
  const MatrixXd Ft = F(t), Lt = L(t), Ht = H(t), Xt = X(t), Ut = U(t);
  const VectorXd ct = c(t), rt = r(t);
  require(Ft.rows() == nx && Ft.cols() == nx, "F must be nx x nx");
  require(Lt.rows() == nx && Lt.cols() == nu, "L must be nx x nu");
  require(ct.size() == nx, "c must have nx entries");
  require(Ht.rows() == nr && Ht.cols() == nx, "H must be nr x nx");
  require(Xt.rows() == nr && Xt.cols() == nr, "X must be nr x nr");
  require(Ut.rows() == nu && Ut.cols() == nu, "U must be nu x nu");
  require(rt.size() == nr, "r must have nr entries");
  require(Hf.cols() == nx, "Hf must have nx columns");
  require(Xf.rows() == Hf.rows() && Xf.cols() == Hf.rows(), "Xf must match Hf rows");
  require(rf.size() == Hf.rows(), "rf must match Hf rows");
  require(x0.size() == nx, "x0 must have nx entries");

  auto symmetric = [](const MatrixXd& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
  };
  require(symmetric(Xt), "X(t) must be symmetric");
  require(symmetric(Ut), "U(t) must be symmetric");
  require(symmetric(Xf), "Xf must be symmetric");
  require(Ut.llt().info() == Eigen::Success, "U(t) must be positive definite");
  // PSD: shift by a relative epsilon so that exactly singular weights pass.
  auto psd = [](const MatrixXd& m) {
    if (m.size() == 0) return true;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    return es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
  };
  require(psd(Xt), "X(t) must be positive semi-definite");
  require(psd(Xf), "Xf must be positive semi-definite");
}

// ---------------------------------------------------------------------------
// Value-function parameter records
// ---------------------------------------------------------------------------

/// V(x,t) = 1/2 x' S x - v' x (+ const).
struct ValueParams {
  MatrixXd S;
  VectorXd v;
  double t = 0.0;
};

/// Dual-form conditional value function on [s, tau]:
///   V(x,s;z,tau) = max_l 1/2 x'Jx - x'eta - 1/2 l'Cl - l'(z - Ax - b).
/// `terminal` marks an element whose interval ends at tf+, i.e. one that
/// already contains the terminal cost.
struct CondValueParams {
  MatrixXd A;
  VectorXd b;
  MatrixXd C;
  VectorXd eta;
  MatrixXd J;
  double s = 0.0;
  double tau = 0.0;
  bool terminal = false;

  /// Zero-length element: the identity of the combination operator.
  static CondValueParams identity(int nx, double t) {
    return CondValueParams{MatrixXd::Identity(nx, nx), VectorXd::Zero(nx), MatrixXd::Zero(nx, nx),
                           VectorXd::Zero(nx), MatrixXd::Zero(nx, nx), t, t, false};
  }

  int dim() const { return static_cast<int>(A.rows()); }
};

/// x(t) = Psi x(s) + alpha for the closed-loop optimal dynamics on [s, t].
struct TransitionSegment {
  MatrixXd Psi;
  VectorXd alpha;
  double s = 0.0;
  double t = 0.0;

  static TransitionSegment identity(int nx, double t) {
    return TransitionSegment{MatrixXd::Identity(nx, nx), VectorXd::Zero(nx), t, t};
  }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<VectorXd> states;
  std::vector<VectorXd> controls;
};

// ---------------------------------------------------------------------------
// Tracking benchmark model
// ---------------------------------------------------------------------------

/// Per-output truncated Fourier series
///   r_d(t) = sum_k a[d][k] cos(2 pi k t / P) + b[d][k] sin(2 pi k t / P),  k = 0..K-1.
struct FourierReference {
  double period = 1.0;
  std::vector<std::vector<double>> cos_coeffs;
  std::vector<std::vector<double>> sin_coeffs;

  int dim() const { return static_cast<int>(cos_coeffs.size()); }

  VectorXd operator()(double t) const { return evaluate(t, false); }
  VectorXd derivative(double t) const { return evaluate(t, true); }

 private:
  VectorXd evaluate(double t, bool derivative) const {
    VectorXd out = VectorXd::Zero(dim());
    const double w = 2.0 * std::numbers::pi / period;
    for (int d = 0; d < dim(); ++d) {
      const auto& a = cos_coeffs[d];
      const auto& b = sin_coeffs[d];
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double wk = w * static_cast<double>(k);
        const double bk = k < b.size() ? b[k] : 0.0;
        if (derivative) {
          out[d] += -a[k] * wk * std::sin(wk * t) + bk * wk * std::cos(wk * t);
        } else {
          out[d] += a[k] * std::cos(wk * t) + bk * std::sin(wk * t);
        }
      }
    }
    return out;
  }
};

/// Four-state double integrator tracking a planar reference curve.
///
/// State (p_x, p_y, v_x, v_y), control (a_x, a_y). The terminal cost weights
/// the full state with Hf = Xf = I4; its reference is the curve position and
/// velocity at tf.
inline LqtProblem tracking_problem(const FourierReference& reference, double tf) {
  if (reference.dim() != 2) throw std::invalid_argument("tracking problem needs a 2-d reference");
  MatrixXd F = MatrixXd::Zero(4, 4);
  F(0, 2) = 1.0;
  F(1, 3) = 1.0;
  MatrixXd L = MatrixXd::Zero(4, 2);
  L(2, 0) = 1.0;
  L(3, 1) = 1.0;
  MatrixXd H = MatrixXd::Zero(2, 4);
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;

  LqtProblem p = LqtProblem::constant(F, L, VectorXd::Zero(4), H, MatrixXd::Identity(2, 2),
                                      0.1 * MatrixXd::Identity(2, 2), VectorXd::Zero(2),
                                      MatrixXd::Identity(4, 4), MatrixXd::Identity(4, 4),
                                      VectorXd::Zero(4), VectorXd::Zero(4));
  p.r = [reference](double t) { return reference(t); };
  p.rf.head(2) = reference(tf);
  p.rf.tail(2) = reference.derivative(tf);
  p.x0 << 5.0, 5.0, 0.0, 0.0;
  return p;
}

/// Scalar problem f = x + u, l = x^2/2 + u^2/2, phi = S_f x^2 / 2.
inline LqtProblem scalar_lqr_problem(double terminal_weight, double x0 = 1.0) {
  const MatrixXd one = MatrixXd::Ones(1, 1);
  VectorXd x = VectorXd::Constant(1, x0);
  return LqtProblem::constant(one, one, VectorXd::Zero(1), one, one, one, VectorXd::Zero(1), one,
                              terminal_weight * one, VectorXd::Zero(1), x);
}

}  // namespace hjbscan
