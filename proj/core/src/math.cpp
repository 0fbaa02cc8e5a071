#include "apfit/math.hpp"

#include <stdexcept>
#include <utility>

namespace apfit {

Mat4 operator*(const Mat4& a, const Mat4& b) {
  Mat4 r;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      r(i, j) = s;
    }
  }
  return r;
}

Vec4d operator*(const Mat4& a, const Vec4d& v) {
  return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z + a(0, 3) * v.w,
      a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z + a(1, 3) * v.w,
      a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z + a(2, 3) * v.w,
      a(3, 0) * v.x + a(3, 1) * v.y + a(3, 2) * v.z + a(3, 3) * v.w};
}

Vec3d transform_point(const Mat4& a, const Vec3d& p) {
  auto h = a * Vec4d{p.x, p.y, p.z, 1};
  return {h.x, h.y, h.z};
}

Vec3d transform_direction(const Mat4& a, const Vec3d& d) {
  auto h = a * Vec4d{d.x, d.y, d.z, 0};
  return {h.x, h.y, h.z};
}

Mat4 translation(const Vec3d& t) {
  Mat4 r;
  r(0, 3) = t.x;
  r(1, 3) = t.y;
  r(2, 3) = t.z;
  return r;
}

Mat4 scaling(const Vec3d& s) {
  Mat4 r;
  r(0, 0) = s.x;
  r(1, 1) = s.y;
  r(2, 2) = s.z;
  return r;
}

Mat4 rotation(const Vec3d& axis, double angle) {
  auto a = normalize(axis);
  auto c = std::cos(angle), s = std::sin(angle), t = 1 - c;
  Mat4 r;
  r(0, 0) = t * a.x * a.x + c;
  r(0, 1) = t * a.x * a.y - s * a.z;
  r(0, 2) = t * a.x * a.z + s * a.y;
  r(1, 0) = t * a.x * a.y + s * a.z;
  r(1, 1) = t * a.y * a.y + c;
  r(1, 2) = t * a.y * a.z - s * a.x;
  r(2, 0) = t * a.x * a.z - s * a.y;
  r(2, 1) = t * a.y * a.z + s * a.x;
  r(2, 2) = t * a.z * a.z + c;
  return r;
}

Mat4 look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up) {
  auto f = normalize(target - eye);
  auto s = normalize(cross(f, up));
  auto u = cross(s, f);
  Mat4 r;
  r(0, 0) = s.x;
  r(0, 1) = s.y;
  r(0, 2) = s.z;
  r(1, 0) = u.x;
  r(1, 1) = u.y;
  r(1, 2) = u.z;
  r(2, 0) = -f.x;
  r(2, 1) = -f.y;
  r(2, 2) = -f.z;
  r(0, 3) = -dot(s, eye);
  r(1, 3) = -dot(u, eye);
  r(2, 3) = dot(f, eye);
  return r;
}

Mat4 perspective(double fovy, double aspect, double near, double far) {
  if (!(near > 0) || !(far > near) || !(aspect > 0) || !(fovy > 0))
    throw std::invalid_argument("perspective: invalid frustum");
  auto f = 1 / std::tan(fovy / 2);
  Mat4 r;
  r.m.fill(0);
  r(0, 0) = f / aspect;
  r(1, 1) = f;
  r(2, 2) = (far + near) / (near - far);
  r(2, 3) = 2 * far * near / (near - far);
  r(3, 2) = -1;
  return r;
}

bool is_affine(const Mat4& a, double tol) {
  return std::abs(a(3, 0)) <= tol && std::abs(a(3, 1)) <= tol &&
         std::abs(a(3, 2)) <= tol && std::abs(a(3, 3) - 1) <= tol;
}

Mat4 inverse(const Mat4& a) {
  std::array<std::array<double, 8>, 4> g{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) g[i][j] = a(i, j);
    g[i][4 + i] = 1;
  }
  for (int c = 0; c < 4; ++c) {
    int pivot = c;
    for (int r = c + 1; r < 4; ++r)
      if (std::abs(g[r][c]) > std::abs(g[pivot][c])) pivot = r;
    if (g[pivot][c] == 0) throw std::domain_error("inverse: singular matrix");
    std::swap(g[c], g[pivot]);
    auto inv = 1 / g[c][c];
    for (auto& x : g[c]) x *= inv;
    for (int r = 0; r < 4; ++r) {
      if (r == c) continue;
      auto f = g[r][c];
      for (int k = 0; k < 8; ++k) g[r][k] -= f * g[c][k];
    }
  }
  Mat4 r;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) r(i, j) = g[i][4 + j];
  return r;
}

Vec3d camera_position(const Mat4& view) {
  return transform_point(inverse(view), {0, 0, 0});
}

}  // namespace apfit
