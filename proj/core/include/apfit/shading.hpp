// Deferred shading: tangent-space normal mapping, one diffuse lobe plus an
// isotropic GGX specular lobe driven by a (gamma, roughness, metalness)
// texture, back-to-front layer compositing, and the log + sRGB tone map.

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "apfit/dual.hpp"
#include "apfit/image.hpp"
#include "apfit/math.hpp"
#include "apfit/texture.hpp"

namespace apfit {

inline constexpr double min_roughness   = 0.04;
inline constexpr double dielectric_f0   = 0.04;
inline constexpr double cosine_epsilon  = 1e-4;

struct PointLight {
  Vec3d position;
  Vec3d intensity{1, 1, 1};
};

// Latent material. kd is RGBA (alpha = coverage), orm stores
// (gamma, roughness, metalness), normal is tangent-space in [0, 1].
struct Material {
  TexturePyramid               kd;
  TexturePyramid               orm;
  TexturePyramid               normal;
  std::optional<Image>         displacement;
  std::optional<Vec3d>         ambient;
};

// Projection applied after every optimizer step.
void clamp_kd(std::span<double> values);
void clamp_orm(std::span<double> values);   // interleaved (gamma, r, m)
void clamp_normal_map(std::span<double> values);
void clamp_material(Material& material);

// --- normal mapping ----------------------------------------------------------

// n = normalize(T mx + B my + N mz), (mx, my, mz) = 2 map - 1. Falls back to
// the geometric normal when the perturbed normal has zero length.
template <typename T>
Vec3<T> apply_normal_map(const Vec3<T>& normal, const Vec3<T>& tangent,
    const Vec3<T>& bitangent, const Vec3<T>& map) {
  auto p = tangent * (map.x * 2.0 - 1.0) + bitangent * (map.y * 2.0 - 1.0) +
           normal * (map.z * 2.0 - 1.0);
  auto len2 = dot(p, p);
  if (value_of(len2) <= 1e-24) return normal;
  using std::sqrt;
  return p / sqrt(len2);
}

// --- BRDF --------------------------------------------------------------------

// GGX normal distribution with alpha = roughness^2.
template <typename T>
T ggx_distribution(const T& n_dot_h, const T& roughness) {
  auto a2 = roughness * roughness * roughness * roughness;
  auto d  = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
  return a2 / (d * d * pi);
}

// Height-correlated Smith masking-shadowing G2.
template <typename T>
T smith_g2(const T& n_dot_l, const T& n_dot_v, const T& roughness) {
  using std::sqrt;
  auto a2 = roughness * roughness * roughness * roughness;
  auto gl = n_dot_v * sqrt(a2 + (1.0 - a2) * n_dot_l * n_dot_l);
  auto gv = n_dot_l * sqrt(a2 + (1.0 - a2) * n_dot_v * n_dot_v);
  return n_dot_l * n_dot_v * 2.0 / (gl + gv);
}

// Per-pixel G-buffer record. Normal, tangent and bitangent are interpolated
// (not yet normalized).
template <typename T>
struct SurfacePoint {
  Vec3<T> position, normal, tangent, bitangent;
  T       kd[4];
  T       orm[3];
  Vec3<T> normal_map;
};

inline constexpr int surface_point_size = 22;

// Radiance excluding the ambient term.
template <typename T>
Vec3<T> shade_direct(const SurfacePoint<T>& s, const PointLight& light,
    const Vec3d& camera) {
  using std::pow;
  using std::sqrt;
  auto n = apply_normal_map(normalize(s.normal), normalize(s.tangent),
      normalize(s.bitangent), s.normal_map);

  Vec3<T> lp{T(light.position.x), T(light.position.y), T(light.position.z)};
  Vec3<T> cp{T(camera.x), T(camera.y), T(camera.z)};
  auto    to_light = lp - s.position;
  auto    dist2    = dot(to_light, to_light);
  auto    wl       = to_light / sqrt(dist2);
  auto    n_dot_l  = dot(n, wl);
  if (value_of(n_dot_l) <= 0) return {T(0), T(0), T(0)};
  auto wv      = normalize(cp - s.position);
  auto h       = normalize(wl + wv);
  auto n_dot_v = at_least(dot(n, wv), cosine_epsilon);
  auto nl      = at_least(n_dot_l, cosine_epsilon);
  auto n_dot_h = dot(n, h);
  auto v_dot_h = at_least(dot(wv, h), 0.0);

  const auto& gamma = s.orm[0];
  const auto& rough = s.orm[1];
  const auto& metal = s.orm[2];
  auto        D     = ggx_distribution(n_dot_h, rough);
  auto        G     = smith_g2(nl, n_dot_v, rough);
  auto        f5    = pow(at_least(1.0 - v_dot_h, 0.0), 5.0);
  auto        spec_scale = D * G / (nl * n_dot_v * 4.0) * (1.0 - gamma);

  Vec3<T> out;
  for (int c = 0; c < 3; ++c) {
    auto f0      = (1.0 - metal) * dielectric_f0 + metal * s.kd[c];
    auto fresnel = f0 + (1.0 - f0) * f5;
    auto diffuse = (1.0 - metal) * s.kd[c] / pi;
    out[c] = (diffuse + spec_scale * fresnel) * n_dot_l * (light.intensity[c] / dist2);
  }
  return out;
}

struct ShadeResult {
  Vec3d  radiance;
  double alpha = 0;
};

// Throws Error when the radiance is not finite.
ShadeResult shade_point(const SurfacePoint<double>& s, const PointLight& light,
    const Vec3d& camera, const Vec3d& ambient);
// Accumulates adjoints of every SurfacePoint field (in declaration order,
// 22 values) and of the ambient color.
void shade_point_backward(const SurfacePoint<double>& s, const PointLight& light,
    const Vec3d& camera, const Vec3d& ambient, const Vec3d& grad_radiance,
    double grad_alpha, std::span<double, surface_point_size> grad_surface,
    Vec3d& grad_ambient);

// G-buffer of per-pixel surface records; mask marks covered pixels.
struct GBuffer {
  int                               width = 0, height = 0;
  std::vector<char>                 mask;
  std::vector<SurfacePoint<double>> points;
};

// RGBA image: HDR radiance plus kd alpha; background pixels are zero.
Image shade_deferred(const GBuffer& gbuffer, const PointLight& light,
    const Vec3d& camera, const Vec3d& ambient);
// grad_points must have gbuffer.points.size() * surface_point_size entries.
void shade_deferred_backward(const GBuffer& gbuffer, const PointLight& light,
    const Vec3d& camera, const Vec3d& ambient, const Image& grad_rgba,
    std::span<double> grad_points, Vec3d& grad_ambient);

// --- compositing -------------------------------------------------------------

// Layers are RGBA, front (index 0) to back. C = background, then
// C = a_p c_p + (1 - a_p) C for p = P-1 .. 0. Returns RGB.
Image blend_layers(std::span<const Image> layers, const Vec3d& background);
void  blend_layers_backward(std::span<const Image> layers,
     const Vec3d& background, const Image& grad_out,
     std::span<Image> grad_layers);

// One step of the recurrence: out = a c + (1 - a) accum.
Image blend_over(const Image& rgba, const Image& accum);
void  blend_over_backward(const Image& rgba, const Image& accum,
     const Image& grad_out, Image& grad_rgba, Image& grad_accum);

// --- tone mapping ------------------------------------------------------------

double srgb_encode(double linear);
double srgb_decode(double encoded);
// Gamma(log(x + 1)). Throws std::domain_error on negative input.
double tone_map(double x);
// Derivative; at the branch point the power branch is used.
double tone_map_derivative(double x);
Image  tone_map(const Image& hdr);

}  // namespace apfit
