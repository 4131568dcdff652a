#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "hjbscan/model.hpp"

namespace hjbscan {

/// Everything the solver needs at one primal-dual point (q, lambda), with the
/// Lagrangian L = f + lambda' c.
struct SqpEvaluation {
  double objective = 0.0;
  Eigen::VectorXd gradient;     // grad f
  Eigen::VectorXd constraints;  // c
  Eigen::MatrixXd jacobian;     // dc/dq
  Eigen::MatrixXd hessian;      // Hessian of L
};

using SqpModel = std::function<void(const Eigen::VectorXd& q, const Eigen::VectorXd& lambda, SqpEvaluation& out)>;

struct SqpOptions {
  int max_iterations = 100;
  double stationarity_tol = 1e-8;
  double feasibility_tol = 1e-10;
  double penalty = 1.0;  // weight of |c|^2 in the merit function
  int max_backtracks = 40;
};

struct SqpDiagnostics {
  int iterations = 0;
  double stationarity = 0.0;          // |grad L|_inf
  double constraint_violation = 0.0;  // |c|_inf
  bool converged = false;
  bool regularized = false;
  std::string message;
};

struct SqpResult {
  Eigen::VectorXd q;
  Eigen::VectorXd lambda;
  double objective = 0.0;
  SqpDiagnostics diagnostics;
};

namespace detail {

inline double kkt_merit(const SqpEvaluation& e, const Eigen::VectorXd& lambda, double penalty) {
  const Eigen::VectorXd gl = e.gradient + e.jacobian.transpose() * lambda;
  return gl.squaredNorm() + penalty * e.constraints.squaredNorm();
}

inline bool all_finite(const SqpEvaluation& e) {
  return std::isfinite(e.objective) && e.gradient.allFinite() && e.constraints.allFinite() &&
         e.jacobian.allFinite() && e.hessian.allFinite();
}

}  // namespace detail

/// Equality-constrained minimisation by damped Newton iterations on the KKT
/// system, globalised with a backtracking line search on
/// |grad L|^2 + penalty |c|^2. A singular KKT matrix is retried once with a
/// Levenberg shift of the Hessian block before giving up.
inline SqpResult sqp_solve_equality(const SqpModel& model, const Eigen::VectorXd& q0, Eigen::Index num_constraints,
                                    const SqpOptions& opt = {}) {
  const Eigen::Index nv = q0.size(), nc = num_constraints;
  SqpResult res;
  res.q = q0;
  res.lambda = Eigen::VectorXd::Zero(nc);
  SqpDiagnostics& diag = res.diagnostics;

  SqpEvaluation ev;
  model(res.q, res.lambda, ev);
  if (!detail::all_finite(ev)) {
    diag.message = "non-finite model values at the starting point";
    return res;
  }
  // Least-squares multipliers for the starting point.
  if (nc > 0) {
    res.lambda = ev.jacobian.transpose().colPivHouseholderQr().solve(-ev.gradient);
    model(res.q, res.lambda, ev);
  }

  Eigen::MatrixXd kkt(nv + nc, nv + nc);
  Eigen::VectorXd rhs(nv + nc);
  for (int it = 0;; ++it) {
    const Eigen::VectorXd grad_l = ev.gradient + ev.jacobian.transpose() * res.lambda;
    diag.stationarity = grad_l.size() ? grad_l.cwiseAbs().maxCoeff() : 0.0;
    diag.constraint_violation = nc ? ev.constraints.cwiseAbs().maxCoeff() : 0.0;
    diag.iterations = it;
    res.objective = ev.objective;
    if (diag.stationarity <= opt.stationarity_tol && diag.constraint_violation <= opt.feasibility_tol) {
      diag.converged = true;
      diag.message = "converged";
      return res;
    }
    if (it >= opt.max_iterations) {
      diag.message = "iteration limit reached";
      return res;
    }

    kkt.setZero();
    kkt.topLeftCorner(nv, nv) = ev.hessian;
    kkt.topRightCorner(nv, nc) = ev.jacobian.transpose();
    kkt.bottomLeftCorner(nc, nv) = ev.jacobian;
    rhs.head(nv) = -grad_l;
    rhs.tail(nc) = -ev.constraints;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
    if (!(lu_rcond(lu) > 1e-14)) {
      diag.regularized = true;
      const double shift = 1e-8 * std::max(1.0, ev.hessian.cwiseAbs().maxCoeff());
      kkt.topLeftCorner(nv, nv) += shift * Eigen::MatrixXd::Identity(nv, nv);
      kkt.bottomRightCorner(nc, nc) -= shift * Eigen::MatrixXd::Identity(nc, nc);
      lu.compute(kkt);
      if (!(lu_rcond(lu) > 1e-14)) {
        diag.message = "singular KKT system";
        return res;
      }
    }
    const Eigen::VectorXd step = lu.solve(rhs);
    const Eigen::VectorXd dq = step.head(nv);
    const Eigen::VectorXd dl = step.tail(nc);

    const double merit0 = detail::kkt_merit(ev, res.lambda, opt.penalty);
    double alpha = 1.0;
    bool accepted = false;
    SqpEvaluation trial;
    for (int b = 0; b < opt.max_backtracks; ++b, alpha *= 0.5) {
      const Eigen::VectorXd q = res.q + alpha * dq;
      const Eigen::VectorXd lambda = res.lambda + alpha * dl;
      model(q, lambda, trial);
      if (!detail::all_finite(trial)) continue;
      // Near the solution the merit is at rounding level, so a full step
      // that meets the tolerances is taken even without a decrease.
      const bool done = b == 0 &&
                        (trial.gradient + trial.jacobian.transpose() * lambda).cwiseAbs().maxCoeff() <=
                            opt.stationarity_tol &&
                        (nc == 0 || trial.constraints.cwiseAbs().maxCoeff() <= opt.feasibility_tol);
      if (done || detail::kkt_merit(trial, lambda, opt.penalty) <= (1.0 - 1e-4 * alpha) * merit0) {
        res.q = q;
        res.lambda = lambda;
        ev = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      diag.iterations = it + 1;
      diag.message = "line search failed";
      return res;
    }
  }
}

}  // namespace hjbscan
