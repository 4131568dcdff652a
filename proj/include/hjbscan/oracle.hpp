#pragma once

// Closed-form reference solutions. Deliberately depends on nothing else in
// the library.

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hjbscan::oracle {

/// Scalar problem dx/dt = x + u with cost 1/2 x^2 + 1/2 u^2 running and
/// Sf/2 x^2 terminal. The Riccati equation is -dS/dt = 2S - S^2 + 1.
struct ScalarLqrClosedForm {
  double Sf = 1.0;
  double tf = 1.0;

  ScalarLqrClosedForm() = default;
  ScalarLqrClosedForm(double terminal_weight, double final_time) : Sf(terminal_weight), tf(final_time) {
    if (!(Sf >= 0.0 && Sf < 1.0 + std::numbers::sqrt2)) {
      throw std::invalid_argument("scalar closed form needs 0 <= Sf < 1 + sqrt(2)");
    }
  }

  /// S(t) = (Sf (sqrt2 - th) - th) / (sqrt2 + (1 - Sf) th), th = tanh(sqrt2 (t - tf)).
  double S(double t) const {
    constexpr double r2 = std::numbers::sqrt2;
    const double th = std::tanh(r2 * (t - tf));
    return (Sf * (r2 - th) - th) / (r2 + (1.0 - Sf) * th);
  }

  double v(double) const { return 0.0; }
};

/// The five conditional value parameters of the scalar problem on [s, tau].
struct ScalarCondParams {
  double A = 1.0;
  double b = 0.0;
  double C = 0.0;
  double eta = 0.0;
  double J = 0.0;
};

inline ScalarCondParams scalar_cond_params(double s, double tau) {
  constexpr double r2 = std::numbers::sqrt2;
  if (s == tau) return {};
  const double th = std::tanh(r2 * (s - tau));
  const double A = r2 * std::exp(-r2 * (s - tau)) * (th + 1.0) / (th + r2);
  const double CJ = r2 / (th + r2) - 1.0;
  return ScalarCondParams{A, 0.0, CJ, 0.0, CJ};
}

/// dx/dt = x u, u in [0, 1], terminal cost -x(1); horizon [0, 1].
inline double reachable_value(double x, double t) { return x > 0.0 ? -x * std::exp(1.0 - t) : -x; }

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// States reachable at time t from y at time s.
inline Interval reachable_interval(double y, double s, double t) {
  const double g = std::exp(t - s);
  return y > 0.0 ? Interval{y, y * g} : Interval{y * g, y};
}

/// Reachable-set element on [s, t], parameterised by gamma = exp(t - s).
struct ReachableScalarElement {
  double gamma = 1.0;
  double s = 0.0;
  double t = 0.0;

  static ReachableScalarElement over(double s, double t) { return {std::exp(t - s), s, t}; }
  static ReachableScalarElement identity(double t) { return {1.0, t, t}; }

  Interval reachable(double y) const { return y > 0.0 ? Interval{y, y * gamma} : Interval{y * gamma, y}; }
};

inline ReachableScalarElement gamma_combine(const ReachableScalarElement& e1, const ReachableScalarElement& e2) {
  return ReachableScalarElement{e1.gamma * e2.gamma, e1.s, e2.t};
}

/// min over the reachable set of the terminal cost -z.
inline double reachable_value_from_element(const ReachableScalarElement& e, double y) {
  return -e.reachable(y).hi;
}

}  // namespace hjbscan::oracle
