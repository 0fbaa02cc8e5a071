#include "apfit/shading.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "apfit/error.hpp"

namespace apfit {

void clamp_kd(std::span<double> values) {
  for (auto& v : values) v = std::clamp(v, 0.0, 1.0);
}

void clamp_orm(std::span<double> values) {
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = std::clamp(values[i], i % 3 == 1 ? min_roughness : 0.0, 1.0);
}

void clamp_normal_map(std::span<double> values) {
  for (auto& v : values) v = std::clamp(v, 0.0, 1.0);
}

void clamp_material(Material& m) {
  for (auto& l : m.kd.levels) clamp_kd(l.data);
  for (auto& l : m.orm.levels) clamp_orm(l.data);
  for (auto& l : m.normal.levels) clamp_normal_map(l.data);
  if (m.ambient)
    for (int c = 0; c < 3; ++c) (*m.ambient)[c] = std::max((*m.ambient)[c], 0.0);
}

// --- point shading -----------------------------------------------------------

ShadeResult shade_point(const SurfacePoint<double>& s, const PointLight& light,
    const Vec3d& camera, const Vec3d& ambient) {
  auto        direct = shade_direct(s, light, camera);
  ShadeResult r;
  for (int c = 0; c < 3; ++c) r.radiance[c] = direct[c] + ambient[c] * s.kd[c];
  r.alpha = s.kd[3];
  for (int c = 0; c < 3; ++c)
    if (!std::isfinite(r.radiance[c]))
      throw Error("non-finite radiance (roughness " + std::to_string(s.orm[1]) + ")");
  return r;
}

namespace {

using ShadeDual = Dual<surface_point_size>;

SurfacePoint<ShadeDual> lift(const SurfacePoint<double>& s) {
  SurfacePoint<ShadeDual> d;
  int                     lane = 0;
  auto vec = [&](const Vec3d& v) {
    Vec3<ShadeDual> r{ShadeDual::variable(v.x, lane), ShadeDual::variable(v.y, lane + 1),
        ShadeDual::variable(v.z, lane + 2)};
    lane += 3;
    return r;
  };
  d.position  = vec(s.position);
  d.normal    = vec(s.normal);
  d.tangent   = vec(s.tangent);
  d.bitangent = vec(s.bitangent);
  for (int c = 0; c < 4; ++c) d.kd[c] = ShadeDual::variable(s.kd[c], lane++);
  for (int c = 0; c < 3; ++c) d.orm[c] = ShadeDual::variable(s.orm[c], lane++);
  d.normal_map = vec(s.normal_map);
  return d;
}

}  // namespace

void shade_point_backward(const SurfacePoint<double>& s, const PointLight& light,
    const Vec3d& camera, const Vec3d& ambient, const Vec3d& grad_radiance,
    double grad_alpha, std::span<double, surface_point_size> grad_surface,
    Vec3d& grad_ambient) {
  auto direct = shade_direct(lift(s), light, camera);
  for (int c = 0; c < 3; ++c) {
    auto g = grad_radiance[c];
    if (g == 0) continue;
    for (int k = 0; k < surface_point_size; ++k) grad_surface[k] += g * direct[c].d[k];
    grad_surface[12 + c] += g * ambient[c];
    grad_ambient[c] += g * s.kd[c];
  }
  grad_surface[15] += grad_alpha;
}

Image shade_deferred(const GBuffer& g, const PointLight& light,
    const Vec3d& camera, const Vec3d& ambient) {
  Image out(g.width, g.height, 4);
  for (std::size_t pix = 0; pix < g.points.size(); ++pix) {
    if (!g.mask[pix]) continue;
    ShadeResult r;
    try {
      r = shade_point(g.points[pix], light, camera, ambient);
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " at pixel (" + std::to_string(pix % g.width) + ", " +
                  std::to_string(pix / g.width) + ")");
    }
    for (int c = 0; c < 3; ++c) out.data[pix * 4 + c] = r.radiance[c];
    out.data[pix * 4 + 3] = r.alpha;
  }
  return out;
}

void shade_deferred_backward(const GBuffer& g, const PointLight& light,
    const Vec3d& camera, const Vec3d& ambient, const Image& grad_rgba,
    std::span<double> grad_points, Vec3d& grad_ambient) {
  for (std::size_t pix = 0; pix < g.points.size(); ++pix) {
    if (!g.mask[pix]) continue;
    Vec3d gr{grad_rgba.data[pix * 4], grad_rgba.data[pix * 4 + 1], grad_rgba.data[pix * 4 + 2]};
    auto  ga = grad_rgba.data[pix * 4 + 3];
    if (gr.x == 0 && gr.y == 0 && gr.z == 0 && ga == 0) continue;
    shade_point_backward(g.points[pix], light, camera, ambient, gr, ga,
        std::span<double, surface_point_size>(&grad_points[pix * surface_point_size],
            surface_point_size),
        grad_ambient);
  }
}

// --- compositing -------------------------------------------------------------

Image blend_over(const Image& rgba, const Image& accum) {
  Image out(accum.width, accum.height, 3);
  for (std::size_t p = 0; p < accum.pixel_count(); ++p) {
    auto a = rgba.data[p * 4 + 3];
    for (int c = 0; c < 3; ++c)
      out.data[p * 3 + c] = a * rgba.data[p * 4 + c] + (1 - a) * accum.data[p * 3 + c];
  }
  return out;
}

void blend_over_backward(const Image& rgba, const Image& accum,
    const Image& grad_out, Image& grad_rgba, Image& grad_accum) {
  for (std::size_t p = 0; p < accum.pixel_count(); ++p) {
    auto   a  = rgba.data[p * 4 + 3];
    double ga = 0;
    for (int c = 0; c < 3; ++c) {
      auto g = grad_out.data[p * 3 + c];
      grad_rgba.data[p * 4 + c] += g * a;
      grad_accum.data[p * 3 + c] += g * (1 - a);
      ga += g * (rgba.data[p * 4 + c] - accum.data[p * 3 + c]);
    }
    grad_rgba.data[p * 4 + 3] += ga;
  }
}

Image blend_layers(std::span<const Image> layers, const Vec3d& background) {
  if (layers.empty()) throw std::invalid_argument("blend_layers: no layers");
  Image accum(layers[0].width, layers[0].height, 3);
  for (std::size_t p = 0; p < accum.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) accum.data[p * 3 + c] = background[c];
  for (auto i = layers.size(); i-- > 0;) accum = blend_over(layers[i], accum);
  return accum;
}

void blend_layers_backward(std::span<const Image> layers,
    const Vec3d& background, const Image& grad_out,
    std::span<Image> grad_layers) {
  // rebuild the accumulators of the forward recurrence
  std::vector<Image> accums;
  Image              accum(layers[0].width, layers[0].height, 3);
  for (std::size_t p = 0; p < accum.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) accum.data[p * 3 + c] = background[c];
  for (auto i = layers.size(); i-- > 0;) {
    accums.push_back(accum);
    accum = blend_over(layers[i], accum);
  }
  // accums[k] is the input to layer (P-1-k)
  auto g = grad_out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& in = accums[layers.size() - 1 - i];
    Image       g_in(g.width, g.height, 3);
    blend_over_backward(layers[i], in, g, grad_layers[i], g_in);
    g = std::move(g_in);
  }
}

// --- tone mapping ------------------------------------------------------------

namespace {
constexpr double srgb_threshold = 0.0031308;
constexpr double srgb_a         = 0.055;
}  // namespace

double srgb_encode(double x) {
  return x <= srgb_threshold ? 12.92 * x : (1 + srgb_a) * std::pow(x, 1 / 2.4) - srgb_a;
}

double srgb_decode(double y) {
  return y <= 12.92 * srgb_threshold ? y / 12.92 : std::pow((y + srgb_a) / (1 + srgb_a), 2.4);
}

double tone_map(double x) {
  if (x < 0 || std::isnan(x)) throw std::domain_error("tone_map: negative input");
  return srgb_encode(std::log1p(x));
}

double tone_map_derivative(double x) {
  auto l  = std::log1p(x);
  auto dl = 1 / (1 + x);
  if (l < srgb_threshold) return 12.92 * dl;
  return (1 + srgb_a) / 2.4 * std::pow(l, 1 / 2.4 - 1) * dl;
}

Image tone_map(const Image& hdr) {
  Image out = hdr;
  for (auto& v : out.data) v = tone_map(v);
  return out;
}

}  // namespace apfit
