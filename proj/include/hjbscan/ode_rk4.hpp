#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hjbscan/error.hpp"

namespace hjbscan {

/// Flattened first-order system dx/dt = f(t, x).
struct OdeSystem {
  Eigen::Index dim = 0;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> derivative;

  Eigen::VectorXd operator()(double t, const Eigen::VectorXd& x) const { return derivative(t, x); }
};

struct OdeSample {
  double t;
  Eigen::VectorXd x;
};

namespace detail {

inline void check_finite(const Eigen::VectorXd& dx, double t) {
  for (Eigen::Index i = 0; i < dx.size(); ++i) {
    if (!std::isfinite(dx[i])) {
      throw NonFiniteError("non-finite derivative at t=" + std::to_string(t) + ", component " +
                               std::to_string(i),
                           t, static_cast<long>(i));
    }
  }
}

}  // namespace detail

/// One classical RK4 step of size h (h < 0 integrates backward).
template <class Derivative>
Eigen::VectorXd rk4_step(const Derivative& f, double t, const Eigen::VectorXd& x, double h) {
  if (h == 0.0) throw std::invalid_argument("rk4_step: zero step");
  const double half = 0.5 * h;
  const Eigen::VectorXd k1 = f(t, x);
  detail::check_finite(k1, t);
  const Eigen::VectorXd k2 = f(t + half, x + half * k1);
  detail::check_finite(k2, t + half);
  const Eigen::VectorXd k3 = f(t + half, x + half * k2);
  detail::check_finite(k3, t + half);
  const Eigen::VectorXd k4 = f(t + h, x + h * k3);
  detail::check_finite(k4, t + h);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Steps through `times` in order (increasing or decreasing), calling
/// `project` on every new state. Returns one state per entry of `times`.
template <class Derivative, class Projection>
std::vector<Eigen::VectorXd> integrate_over(const Derivative& f, std::span<const double> times,
                                            const Eigen::VectorXd& x0, Projection&& project) {
  if (times.empty()) throw std::invalid_argument("integrate_over: empty time list");
  std::vector<Eigen::VectorXd> out;
  out.reserve(times.size());
  out.push_back(x0);
  for (std::size_t k = 1; k < times.size(); ++k) {
    Eigen::VectorXd next = rk4_step(f, times[k - 1], out.back(), times[k] - times[k - 1]);
    project(next);
    out.push_back(std::move(next));
  }
  return out;
}

template <class Derivative>
std::vector<Eigen::VectorXd> integrate_over(const Derivative& f, std::span<const double> times,
                                            const Eigen::VectorXd& x0) {
  return integrate_over(f, times, x0, [](Eigen::VectorXd&) {});
}

/// num_steps uniform RK4 steps from t_start to t_end; direction follows the
/// sign of t_end - t_start. Returns num_steps + 1 samples in integration order.
template <class Derivative>
std::vector<OdeSample> integrate(const Derivative& f, double t_start, double t_end, int num_steps,
                                 const Eigen::VectorXd& x0) {
  if (num_steps < 1) throw std::invalid_argument("integrate: need at least one step");
  if (t_end == t_start) throw std::invalid_argument("integrate: empty interval");
  std::vector<double> times(num_steps + 1);
  for (int i = 0; i <= num_steps; ++i) {
    times[i] = i == num_steps ? t_end : t_start + i * (t_end - t_start) / num_steps;
  }
  const auto states = integrate_over(f, std::span<const double>(times), x0);
  std::vector<OdeSample> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) out.push_back({times[i], states[i]});
  return out;
}

}  // namespace hjbscan
