#pragma once

#include <array>

namespace hjbscan {

/// Second-order forward-mode jet in N independent variables: value,
/// gradient and (full, symmetric) Hessian propagated through + - *.
template <int N>
struct Jet2 {
  double v = 0.0;
  std::array<double, N> g{};
  std::array<std::array<double, N>, N> h{};

  Jet2() = default;
  Jet2(double value) : v(value) {}  // NOLINT: constants promote implicitly

  static Jet2 variable(double value, int index) {
    Jet2 j(value);
    j.g[index] = 1.0;
    return j;
  }

  Jet2& operator+=(const Jet2& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) {
      g[i] += o.g[i];
      for (int k = 0; k < N; ++k) h[i][k] += o.h[i][k];
    }
    return *this;
  }

  Jet2& operator*=(double s) {
    v *= s;
    for (int i = 0; i < N; ++i) {
      g[i] *= s;
      for (int k = 0; k < N; ++k) h[i][k] *= s;
    }
    return *this;
  }
};

template <int N>
Jet2<N> operator+(Jet2<N> a, const Jet2<N>& b) {
  return a += b;
}

template <int N>
Jet2<N> operator+(Jet2<N> a, double b) {
  a.v += b;
  return a;
}

template <int N>
Jet2<N> operator+(double a, Jet2<N> b) {
  b.v += a;
  return b;
}

template <int N>
Jet2<N> operator-(Jet2<N> a) {
  return a *= -1.0;
}

template <int N>
Jet2<N> operator-(Jet2<N> a, const Jet2<N>& b) {
  return a += -b;
}

template <int N>
Jet2<N> operator-(Jet2<N> a, double b) {
  a.v -= b;
  return a;
}

template <int N>
Jet2<N> operator-(double a, const Jet2<N>& b) {
  return a + (-b);
}

template <int N>
Jet2<N> operator*(Jet2<N> a, double s) {
  return a *= s;
}

template <int N>
Jet2<N> operator*(double s, Jet2<N> a) {
  return a *= s;
}

template <int N>
Jet2<N> operator*(const Jet2<N>& a, const Jet2<N>& b) {
  Jet2<N> out(a.v * b.v);
  for (int i = 0; i < N; ++i) {
    out.g[i] = a.v * b.g[i] + b.v * a.g[i];
    for (int k = 0; k < N; ++k) {
      out.h[i][k] = a.v * b.h[i][k] + b.v * a.h[i][k] + a.g[i] * b.g[k] + b.g[i] * a.g[k];
    }
  }
  return out;
}

}  // namespace hjbscan
