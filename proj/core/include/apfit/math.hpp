// Small fixed-size vector and matrix helpers shared by the pipeline stages.
//
// The vector types are templated on the scalar so the same expressions can be
// evaluated on plain doubles (forward pass) or on Dual numbers (local
// Jacobians in the backward pass).

#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace apfit {

inline constexpr double pi = 3.14159265358979323846;

template <typename T>
struct Vec2 {
  T x{}, y{};
};

template <typename T>
struct Vec3 {
  T x{}, y{}, z{};

  T&       operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  const T& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

template <typename T>
struct Vec4 {
  T x{}, y{}, z{}, w{};
};

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Vec4d = Vec4<double>;

// clang-format off
template <typename T> Vec2<T> operator+(const Vec2<T>& a, const Vec2<T>& b) { return {a.x + b.x, a.y + b.y}; }
template <typename T> Vec2<T> operator-(const Vec2<T>& a, const Vec2<T>& b) { return {a.x - b.x, a.y - b.y}; }
template <typename T, typename S> Vec2<T> operator*(const Vec2<T>& a, const S& s) { return {a.x * s, a.y * s}; }

template <typename T> Vec3<T> operator+(const Vec3<T>& a, const Vec3<T>& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
template <typename T> Vec3<T> operator-(const Vec3<T>& a, const Vec3<T>& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
template <typename T> Vec3<T> operator-(const Vec3<T>& a) { return {-a.x, -a.y, -a.z}; }
template <typename T> Vec3<T> operator*(const Vec3<T>& a, const Vec3<T>& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
template <typename T, typename S> Vec3<T> operator*(const Vec3<T>& a, const S& s) { return {a.x * s, a.y * s, a.z * s}; }
template <typename T, typename S> Vec3<T> operator*(const S& s, const Vec3<T>& a) { return {a.x * s, a.y * s, a.z * s}; }
template <typename T, typename S> Vec3<T> operator/(const Vec3<T>& a, const S& s) { return {a.x / s, a.y / s, a.z / s}; }
template <typename T> Vec3<T>& operator+=(Vec3<T>& a, const Vec3<T>& b) { a.x += b.x; a.y += b.y; a.z += b.z; return a; }
template <typename T> Vec3<T>& operator-=(Vec3<T>& a, const Vec3<T>& b) { a.x -= b.x; a.y -= b.y; a.z -= b.z; return a; }
template <typename T, typename S> Vec3<T>& operator*=(Vec3<T>& a, const S& s) { a.x *= s; a.y *= s; a.z *= s; return a; }
// clang-format on

template <typename T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T>
T cross(const Vec2<T>& a, const Vec2<T>& b) {
  return a.x * b.y - a.y * b.x;
}

template <typename T>
T length_squared(const Vec3<T>& a) {
  return dot(a, a);
}

template <typename T>
T length(const Vec3<T>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

template <typename T>
Vec3<T> normalize(const Vec3<T>& a) {
  return a / length(a);
}

// Row-major 4x4 matrix.
struct Mat4 {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  double&       operator()(int r, int c) { return m[r * 4 + c]; }
  const double& operator()(int r, int c) const { return m[r * 4 + c]; }

  static Mat4 identity() { return {}; }
  bool        operator==(const Mat4&) const = default;
};

Mat4  operator*(const Mat4& a, const Mat4& b);
Vec4d operator*(const Mat4& a, const Vec4d& v);

Vec3d transform_point(const Mat4& a, const Vec3d& p);
Vec3d transform_direction(const Mat4& a, const Vec3d& d);
Mat4  translation(const Vec3d& t);
Mat4  scaling(const Vec3d& s);
Mat4  rotation(const Vec3d& axis, double angle);

// Right-handed view matrix, camera looks down -z.
Mat4 look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up);

// OpenGL-style projection: NDC depth in [-1, 1], -1 at the near plane.
Mat4 perspective(double fovy, double aspect, double near, double far);

bool  is_affine(const Mat4& a, double tol = 0);
Mat4  inverse(const Mat4& a);
Vec3d camera_position(const Mat4& view);

}  // namespace apfit
