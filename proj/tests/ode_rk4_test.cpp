#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "hjbscan/ode_rk4.hpp"
#include "test_support.hpp"

namespace hjbscan {
namespace {

using Eigen::VectorXd;

auto zero_field = [](double, const VectorXd& x) { return VectorXd::Zero(x.size()).eval(); };
auto growth = [](double, const VectorXd& x) { return VectorXd(x); };

VectorXd scalar(double v) { return VectorXd::Constant(1, v); }

TEST(Rk4Step, ZeroFieldKeepsState) {
  const VectorXd x = (VectorXd(3) << 1, -2, 3).finished();
  EXPECT_EQ(rk4_step(zero_field, 0.0, x, 0.1), x);
}

TEST(Rk4Step, ExponentialOneStep) {
  EXPECT_NEAR(rk4_step(growth, 0.0, scalar(1.0), 0.1)[0], std::exp(0.1), 1e-7);
}

TEST(Rk4Step, ScalarRiccatiBackward) {
  // dS/dt = -2S + S^2 - 1, S(1) = 1.
  auto riccati = [](double, const VectorXd& s) { return scalar(-2.0 * s[0] + s[0] * s[0] - 1.0); };
  const auto out = integrate(riccati, 1.0, 0.0, 1000, scalar(1.0));
  EXPECT_NEAR(out.back().x[0], testing::kScalarS0, 1e-5);
}

TEST(Rk4Step, RejectsZeroStep) { EXPECT_THROW(rk4_step(growth, 0.0, scalar(1.0), 0.0), std::invalid_argument); }

TEST(Rk4Step, NonFiniteDerivativeNamesTimeAndComponent) {
  auto bad = [](double t, const VectorXd& x) {
    VectorXd d = VectorXd::Zero(x.size());
    if (t > 0.25) d[1] = std::numeric_limits<double>::quiet_NaN();
    return d;
  };
  try {
    integrate(bad, 0.0, 1.0, 10, VectorXd::Zero(2));
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.component(), 1);
    EXPECT_GT(e.time(), 0.25);
    EXPECT_LE(e.time(), 0.4);
  }
}

TEST(Integrate, ZeroFieldIdenticalStates) {
  const VectorXd x0 = (VectorXd(2) << 0.5, 4.0).finished();
  const auto out = integrate(zero_field, 0.0, 1.0, 10, x0);
  ASSERT_EQ(out.size(), 11u);
  for (const auto& s : out) EXPECT_EQ(s.x, x0);
}

TEST(Integrate, ExponentialToOne) {
  const auto out = integrate(growth, 0.0, 1.0, 1000, scalar(1.0));
  EXPECT_NEAR(out.back().x[0], std::exp(1.0), 1e-10);
  EXPECT_EQ(out.back().t, 1.0);
}

TEST(Integrate, BackwardOrdering) {
  const auto out = integrate(growth, 1.0, 0.0, 4, scalar(1.0));
  ASSERT_EQ(out.size(), 5u);
  EXPECT_EQ(out.front().t, 1.0);
  EXPECT_EQ(out.back().t, 0.0);
  for (std::size_t k = 1; k < out.size(); ++k) EXPECT_LT(out[k].t, out[k - 1].t);
  EXPECT_NEAR(out.back().x[0], std::exp(-1.0), 1e-4);
}

TEST(Integrate, RejectsNoSteps) { EXPECT_THROW(integrate(growth, 0.0, 1.0, 0, scalar(1.0)), std::invalid_argument); }

TEST(Rk4Properties, FourthOrderConvergence) {
  for (int n : {10, 20, 40}) {
    const double e1 = std::abs(integrate(growth, 0.0, 1.0, n, scalar(1.0)).back().x[0] - std::exp(1.0));
    const double e2 = std::abs(integrate(growth, 0.0, 1.0, 2 * n, scalar(1.0)).back().x[0] - std::exp(1.0));
    const double ratio = e1 / e2;
    EXPECT_GE(ratio, 12.0) << "n=" << n;
    EXPECT_LE(ratio, 20.0) << "n=" << n;
  }
}

TEST(Rk4Properties, ForwardBackwardRoundTrip) {
  auto linear = [](double, const VectorXd& x) {
    Eigen::Matrix2d A;
    A << -0.5, 1.0, -1.0, -0.2;
    return VectorXd(A * x);
  };
  const VectorXd x0 = (VectorXd(2) << 1.0, -0.5).finished();
  const auto fwd = integrate(linear, 0.0, 1.0, 1000, x0);
  const auto back = integrate(linear, 1.0, 0.0, 1000, fwd.back().x);
  EXPECT_LE((back.back().x - x0).norm() / x0.norm(), 1e-9);
}

TEST(OdeSystem, WrapsDerivative) {
  const OdeSystem sys{1, [](double, const VectorXd& x) { return VectorXd(2.0 * x); }};
  EXPECT_NEAR(integrate(sys, 0.0, 0.5, 200, scalar(1.0)).back().x[0], std::exp(1.0), 1e-9);
}

}  // namespace
}  // namespace hjbscan
