// Forward-mode dual numbers with a fixed number of derivative lanes.
//
// Used to evaluate the local Jacobian of small per-pixel or per-face
// functions exactly; the reverse pass then contracts it with the incoming
// adjoint. Comparisons and branches look at the value only.

#pragma once

#include <array>
#include <cmath>

namespace apfit {

template <int N>
struct Dual {
  double                v = 0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constants are intended

  static Dual variable(double value, int lane) {
    Dual r(value);
    r.d[lane] = 1;
    return r;
  }

  Dual& operator+=(const Dual& b) {
    v += b.v;
    for (int i = 0; i < N; ++i) d[i] += b.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& b) {
    v -= b.v;
    for (int i = 0; i < N; ++i) d[i] -= b.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& b) { return *this = *this * b; }
  Dual& operator/=(const Dual& b) { return *this = *this / b; }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator-(Dual a) {
    a.v = -a.v;
    for (auto& x : a.d) x = -x;
    return a;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.v / b.v);
    auto inv = 1 / b.v;
    for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
    return r;
  }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
};

template <int N>
Dual<N> chain(const Dual<N>& a, double value, double derivative) {
  Dual<N> r(value);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * derivative;
  return r;
}

template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  auto s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s);
}

template <int N>
Dual<N> log(const Dual<N>& a) {
  return chain(a, std::log(a.v), 1 / a.v);
}

template <int N>
Dual<N> exp(const Dual<N>& a) {
  auto e = std::exp(a.v);
  return chain(a, e, e);
}

template <int N>
Dual<N> pow(const Dual<N>& a, double p) {
  auto r = std::pow(a.v, p);
  return chain(a, r, p * std::pow(a.v, p - 1));
}

template <int N>
Dual<N> abs(const Dual<N>& a) {
  return a.v >= 0 ? a : -a;
}

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.v;
}

// max(x, floor) for plain and dual scalars; the derivative follows the branch.
template <typename T>
T at_least(const T& x, double floor) {
  return value_of(x) >= floor ? x : T(floor);
}

}  // namespace apfit
