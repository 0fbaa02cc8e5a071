#include "apfit/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "apfit/dual.hpp"

namespace apfit {

Camera Camera::look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up,
    double fovy, int width, int height, double near, double far) {
  Camera c;
  c.view       = apfit::look_at(eye, target, up);
  c.projection = perspective(fovy, static_cast<double>(width) / height, near, far);
  c.width      = width;
  c.height     = height;
  c.validate();
  return c;
}

void Camera::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("camera resolution must be positive");
}

// --- projection --------------------------------------------------------------

Projected project(std::span<const Vec3d> positions, const Mat4& vp) {
  Projected p;
  p.clip.resize(positions.size());
  p.ndc.resize(positions.size());
  p.valid.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& x = positions[i];
    auto        c = vp * Vec4d{x.x, x.y, x.z, 1};
    p.clip[i]     = c;
    p.valid[i]    = c.w > clip_w_epsilon;
    p.ndc[i]      = p.valid[i] ? Vec3d{c.x / c.w, c.y / c.w, c.z / c.w} : Vec3d{};
  }
  return p;
}

void project_backward(const Projected& proj, const Mat4& vp,
    std::span<const Vec3d> grad_ndc, std::span<Vec3d> grad_positions) {
  for (std::size_t i = 0; i < proj.clip.size(); ++i) {
    if (!proj.valid[i]) continue;
    const auto& g = grad_ndc[i];
    if (g.x == 0 && g.y == 0 && g.z == 0) continue;
    const auto& c     = proj.clip[i];
    auto        inv_w = 1 / c.w;
    // d ndc_k / d clip_k = 1/w, d ndc_k / d w = -clip_k / w^2
    double gc[4] = {g.x * inv_w, g.y * inv_w, g.z * inv_w,
        -(g.x * c.x + g.y * c.y + g.z * c.z) * inv_w * inv_w};
    Vec3d  gp{};
    for (int r = 0; r < 4; ++r) {
      gp.x += vp(r, 0) * gc[r];
      gp.y += vp(r, 1) * gc[r];
      gp.z += vp(r, 2) * gc[r];
    }
    grad_positions[i] += gp;
  }
}

// --- coverage ----------------------------------------------------------------

Vec2d RasterOutput::pixel_center(std::size_t pixel) const {
  auto x = static_cast<int>(pixel % width), y = static_cast<int>(pixel / width);
  return {2.0 * (x + 0.5) / width - 1.0, 1.0 - 2.0 * (y + 0.5) / height};
}

Vec2d RasterOutput::sample_point(std::size_t pixel) const {
  return eval_point.empty() ? pixel_center(pixel) : eval_point[pixel];
}

std::uint64_t RasterOutput::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  for (auto id : triangle_id) {
    h ^= static_cast<std::uint64_t>(id + 1);
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

struct Setup {
  Vec2d  p[3];
  double z[3];
  double area;      // signed
  bool   owns[3];   // tie ownership of edge k (from corner k to k+1)
  bool   flipped;
};

bool setup_triangle(const Projected& proj, const Face& f, Setup& s) {
  for (int k = 0; k < 3; ++k) {
    if (!proj.valid[f[k]]) return false;
    const auto& n = proj.ndc[f[k]];
    s.p[k]        = {n.x, n.y};
    s.z[k]        = n.z;
  }
  s.area = cross(s.p[1] - s.p[0], s.p[2] - s.p[0]);
  if (s.area == 0 || !std::isfinite(s.area)) return false;
  s.flipped = s.area < 0;
  for (int k = 0; k < 3; ++k) {
    auto d = s.p[(k + 1) % 3] - s.p[k];
    if (s.flipped) d = d * -1.0;
    s.owns[k] = d.y < 0 || (d.y == 0 && d.x < 0);
  }
  return true;
}

// Evaluated from a canonical endpoint order so that the two triangles sharing
// an edge see exactly negated values and no pixel is covered twice or missed.
double edge_function(const Vec2d& a, const Vec2d& b, const Vec2d& P) {
  if (a.x < b.x || (a.x == b.x && a.y < b.y)) return cross(b - a, P - a);
  return -cross(a - b, P - b);
}

// Inside test with the tie rule; fills weights of vertices 0 and 1.
bool inside(const Setup& s, Vec2d P, double& w0, double& w1) {
  for (int k = 0; k < 3; ++k) {
    auto e = edge_function(s.p[k], s.p[(k + 1) % 3], P);
    if (s.flipped) e = -e;
    if (e < 0 || (e == 0 && !s.owns[k])) return false;
  }
  w0 = cross(s.p[1] - P, s.p[2] - P) / s.area;
  w1 = cross(s.p[2] - P, s.p[0] - P) / s.area;
  return true;
}

double depth_at(const Setup& s, double w0, double w1) {
  return w0 * s.z[0] + w1 * s.z[1] + (1 - w0 - w1) * s.z[2];
}

struct PixelRange {
  int x0, x1, y0, y1;
};

PixelRange pixel_range(const Setup& s, int width, int height, double pad) {
  double lx = 1e300, hx = -1e300, ly = 1e300, hy = -1e300;
  for (const auto& p : s.p) {
    auto px = (p.x + 1) * width / 2, py = (1 - p.y) * height / 2;
    lx      = std::min(lx, px);
    hx      = std::max(hx, px);
    ly      = std::min(ly, py);
    hy      = std::max(hy, py);
  }
  auto clampi = [](double v, int lo, int hi) {
    if (!(v > lo)) return lo;
    if (!(v < hi)) return hi;
    return static_cast<int>(v);
  };
  return {clampi(std::floor(lx - 0.5 - pad), 0, width - 1),
      clampi(std::ceil(hx - 0.5 + pad), 0, width - 1),
      clampi(std::floor(ly - 0.5 - pad), 0, height - 1),
      clampi(std::ceil(hy - 0.5 + pad), 0, height - 1)};
}

RasterOutput empty_raster(int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("raster resolution must be positive");
  RasterOutput r;
  r.width  = width;
  r.height = height;
  auto n   = static_cast<std::size_t>(width) * height;
  r.triangle_id.assign(n, -1);
  r.u.assign(n, 0.0);
  r.v.assign(n, 0.0);
  r.depth.assign(n, std::numeric_limits<double>::infinity());
  return r;
}

}  // namespace

RasterOutput rasterize(const Projected& proj, std::span<const Face> faces,
    int width, int height, std::span<const double> min_depth) {
  auto r = empty_raster(width, height);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    Setup s;
    if (!setup_triangle(proj, faces[f], s)) continue;
    auto range = pixel_range(s, width, height, 0.0);
    for (int y = range.y0; y <= range.y1; ++y) {
      for (int x = range.x0; x <= range.x1; ++x) {
        Vec2d  P{2.0 * (x + 0.5) / width - 1.0, 1.0 - 2.0 * (y + 0.5) / height};
        double w0, w1;
        if (!inside(s, P, w0, w1)) continue;
        auto z   = depth_at(s, w0, w1);
        auto pix = static_cast<std::size_t>(y) * width + x;
        if (z < -1 || z > 1 || !(z < r.depth[pix])) continue;
        if (!min_depth.empty() && !(z > min_depth[pix])) continue;
        r.triangle_id[pix] = static_cast<int>(f);
        r.u[pix]           = w0;
        r.v[pix]           = w1;
        r.depth[pix]       = z;
      }
    }
  }
  return r;
}

std::span<const Vec2d> msaa_pattern(int samples) {
  static const Vec2d one[]  = {{0, 0}};
  static const Vec2d four[] = {{-0.125, -0.375}, {0.375, -0.125}, {0.125, 0.375}, {-0.375, 0.125}};
  static const Vec2d eight[] = {{1 / 16., -3 / 16.}, {-1 / 16., 3 / 16.}, {5 / 16., 1 / 16.},
      {-3 / 16., -5 / 16.}, {-5 / 16., 5 / 16.}, {-7 / 16., -1 / 16.}, {3 / 16., 7 / 16.},
      {7 / 16., -7 / 16.}};
  static const Vec2d sixteen[] = {{1 / 16., 1 / 16.}, {-1 / 16., -3 / 16.}, {-3 / 16., 2 / 16.},
      {4 / 16., -1 / 16.}, {-5 / 16., -2 / 16.}, {2 / 16., 5 / 16.}, {5 / 16., 3 / 16.},
      {3 / 16., -5 / 16.}, {-2 / 16., 6 / 16.}, {0 / 16., -7 / 16.}, {-4 / 16., -6 / 16.},
      {-6 / 16., 4 / 16.}, {-8 / 16., 0 / 16.}, {7 / 16., -4 / 16.}, {6 / 16., 7 / 16.},
      {-7 / 16., -8 / 16.}};
  switch (samples) {
    case 1: return one;
    case 4: return four;
    case 8: return eight;
    case 16: return sixteen;
    default: throw std::invalid_argument("MSAA sample count must be 1, 4, 8 or 16");
  }
}

RasterOutput msaa_rasterize(const Projected& proj, std::span<const Face> faces,
    int width, int height, int samples, std::span<const double> min_depth) {
  auto pattern = msaa_pattern(samples);
  auto center  = rasterize(proj, faces, width, height, min_depth);
  auto n       = center.pixel_count();
  auto S       = pattern.size();

  std::vector<int>    ids(n * S, -1);
  std::vector<double> depths(n * S, std::numeric_limits<double>::infinity());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    Setup s;
    if (!setup_triangle(proj, faces[f], s)) continue;
    auto range = pixel_range(s, width, height, 1.0);
    for (int y = range.y0; y <= range.y1; ++y) {
      for (int x = range.x0; x <= range.x1; ++x) {
        auto pix = static_cast<std::size_t>(y) * width + x;
        for (std::size_t k = 0; k < S; ++k) {
          Vec2d P{2.0 * (x + 0.5 + pattern[k].x) / width - 1.0,
              1.0 - 2.0 * (y + 0.5 + pattern[k].y) / height};
          double w0, w1;
          if (!inside(s, P, w0, w1)) continue;
          auto z = depth_at(s, w0, w1);
          if (z < -1 || z > 1 || !(z < depths[pix * S + k])) continue;
          if (!min_depth.empty() && !(z > min_depth[pix])) continue;
          ids[pix * S + k]    = static_cast<int>(f);
          depths[pix * S + k] = z;
        }
      }
    }
  }

  auto r = center;
  r.coverage.assign(n, 0.0);
  r.eval_point.resize(n);
  for (std::size_t pix = 0; pix < n; ++pix) {
    r.eval_point[pix] = r.pixel_center(pix);
    auto winner       = center.triangle_id[pix];
    if (winner < 0) {
      // plurality of covered samples, ties to the lower triangle index
      int best = -1, best_count = 0;
      for (std::size_t k = 0; k < S; ++k) {
        auto id = ids[pix * S + k];
        if (id < 0) continue;
        int count = 0;
        for (std::size_t j = 0; j < S; ++j) count += ids[pix * S + j] == id;
        if (count > best_count || (count == best_count && id < best)) {
          best       = id;
          best_count = count;
        }
      }
      winner = best;
    }
    if (winner < 0) continue;
    int   count = 0;
    Vec2d centroid{};
    for (std::size_t k = 0; k < S; ++k) {
      if (ids[pix * S + k] != winner) continue;
      ++count;
      auto x = static_cast<double>(pix % width), y = static_cast<double>(pix / width);
      centroid = centroid + Vec2d{2.0 * (x + 0.5 + pattern[k].x) / width - 1.0,
                                1.0 - 2.0 * (y + 0.5 + pattern[k].y) / height};
    }
    r.coverage[pix] = static_cast<double>(count) / static_cast<double>(S);
    if (center.triangle_id[pix] == winner) continue;
    // center not covered: evaluate at the centroid of the covered samples
    if (count == 0) continue;
    Setup s;
    setup_triangle(proj, faces[winner], s);
    auto P            = centroid * (1.0 / count);
    r.eval_point[pix] = P;
    r.triangle_id[pix] = winner;
    r.u[pix]          = cross(s.p[1] - P, s.p[2] - P) / s.area;
    r.v[pix]          = cross(s.p[2] - P, s.p[0] - P) / s.area;
    r.depth[pix]      = depth_at(s, r.u[pix], r.v[pix]);
  }
  return r;
}

std::vector<RasterOutput> depth_peel(const Projected& proj,
    std::span<const Face> faces, int width, int height, int passes,
    int msaa_samples) {
  if (passes < 1) throw std::invalid_argument("depth peeling needs at least one pass");
  std::vector<RasterOutput> layers;
  layers.reserve(passes);
  std::vector<double> floor;
  for (int p = 0; p < passes; ++p) {
    layers.push_back(msaa_samples > 1
                         ? msaa_rasterize(proj, faces, width, height, msaa_samples, floor)
                         : rasterize(proj, faces, width, height, floor));
    // background pixels stay background in every later layer
    floor = layers.back().depth;
  }
  return layers;
}

void barycentric_backward(const Projected& proj, std::span<const Face> faces,
    const RasterOutput& raster, std::size_t pixel, double grad_u,
    double grad_v, std::span<Vec3d> grad_ndc) {
  auto id = raster.triangle_id[pixel];
  if (id < 0 || (grad_u == 0 && grad_v == 0)) return;
  using D      = Dual<6>;
  const auto& f = faces[id];
  Vec2<D>     p[3];
  for (int k = 0; k < 3; ++k)
    p[k] = {D::variable(proj.ndc[f[k]].x, 2 * k), D::variable(proj.ndc[f[k]].y, 2 * k + 1)};
  auto    sp = raster.sample_point(pixel);
  Vec2<D> P{D(sp.x), D(sp.y)};
  auto    area = cross(p[1] - p[0], p[2] - p[0]);
  auto    u    = cross(p[1] - P, p[2] - P) / area;
  auto    v    = cross(p[2] - P, p[0] - P) / area;
  for (int k = 0; k < 3; ++k) {
    grad_ndc[f[k]].x += grad_u * u.d[2 * k] + grad_v * v.d[2 * k];
    grad_ndc[f[k]].y += grad_u * u.d[2 * k + 1] + grad_v * v.d[2 * k + 1];
  }
}

// --- interpolation -----------------------------------------------------------

Image interpolate(std::span<const double> attr, int K,
    std::span<const Face> faces, const RasterOutput& raster) {
  Image out(raster.width, raster.height, K);
  for (std::size_t pix = 0; pix < raster.pixel_count(); ++pix) {
    auto id = raster.triangle_id[pix];
    if (id < 0) continue;
    const auto& f  = faces[id];
    auto        w0 = raster.u[pix], w1 = raster.v[pix], w2 = 1 - w0 - w1;
    for (int c = 0; c < K; ++c)
      out.data[pix * K + c] =
          w0 * attr[f[0] * K + c] + w1 * attr[f[1] * K + c] + w2 * attr[f[2] * K + c];
  }
  return out;
}

void interpolate_backward(std::span<const double> attr, int K,
    std::span<const Face> faces, const RasterOutput& raster,
    const Image& grad_out, std::span<double> grad_attr,
    std::span<double> grad_u, std::span<double> grad_v) {
  for (std::size_t pix = 0; pix < raster.pixel_count(); ++pix) {
    auto id = raster.triangle_id[pix];
    if (id < 0) continue;
    const auto& f  = faces[id];
    auto        w0 = raster.u[pix], w1 = raster.v[pix], w2 = 1 - w0 - w1;
    double      gu = 0, gv = 0;
    for (int c = 0; c < K; ++c) {
      auto g = grad_out.data[pix * K + c];
      if (g == 0) continue;
      if (!grad_attr.empty()) {
        grad_attr[f[0] * K + c] += g * w0;
        grad_attr[f[1] * K + c] += g * w1;
        grad_attr[f[2] * K + c] += g * w2;
      }
      gu += g * (attr[f[0] * K + c] - attr[f[2] * K + c]);
      gv += g * (attr[f[1] * K + c] - attr[f[2] * K + c]);
    }
    if (!grad_u.empty()) grad_u[pix] += gu;
    if (!grad_v.empty()) grad_v[pix] += gv;
  }
}

double texture_lod(const Projected& proj, std::span<const Face> faces,
    std::span<const Vec2d> uvs, std::span<const Face> uv_faces,
    const RasterOutput& raster, std::size_t pixel, int tw, int th) {
  auto id = raster.triangle_id[pixel];
  if (id < 0) return 0;
  const auto& f = faces[id];
  const auto& t = uv_faces[id];
  Vec2d       p[3];
  for (int k = 0; k < 3; ++k) p[k] = {proj.ndc[f[k]].x, proj.ndc[f[k]].y};
  auto area = cross(p[1] - p[0], p[2] - p[0]);
  // d(w0, w1)/d(ndc x, ndc y)
  double dw0x = (p[1].y - p[2].y) / area, dw0y = (p[2].x - p[1].x) / area;
  double dw1x = (p[2].y - p[0].y) / area, dw1y = (p[0].x - p[2].x) / area;
  auto   a = uvs[t[0]] - uvs[t[2]], b = uvs[t[1]] - uvs[t[2]];
  // texels per pixel along screen x and y
  auto sx = 2.0 / raster.width, sy = 2.0 / raster.height;
  auto dux = (a.x * dw0x + b.x * dw1x) * sx * tw, dvx = (a.y * dw0x + b.y * dw1x) * sx * th;
  auto duy = (a.x * dw0y + b.x * dw1y) * sy * tw, dvy = (a.y * dw0y + b.y * dw1y) * sy * th;
  auto len = std::max(dux * dux + dvx * dvx, duy * duy + dvy * dvy);
  return len > 0 ? 0.5 * std::log2(len) : 0.0;
}

// --- antialiasing ------------------------------------------------------------

EdgeTopology build_edge_topology(std::span<const Face> faces) {
  EdgeTopology                      topo;
  std::map<std::pair<int, int>, int> index;
  topo.face_edges.resize(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      auto key = std::minmax(faces[f][k], faces[f][(k + 1) % 3]);
      auto it  = index.find(key);
      int  e;
      if (it == index.end()) {
        e = static_cast<int>(topo.edges.size());
        index.emplace(key, e);
        topo.edges.push_back({key.first, key.second});
        topo.edge_faces.emplace_back();
      } else {
        e = it->second;
      }
      topo.edge_faces[e].push_back(static_cast<int>(f));
      topo.face_edges[f][k] = e;
    }
  }
  return topo;
}

std::vector<char> silhouette_edges(
    const EdgeTopology& topo, const Projected& proj, std::span<const Face> faces) {
  std::vector<int> facing(faces.size(), 0);
  for (std::size_t f = 0; f < faces.size(); ++f) {
    Setup s;
    if (setup_triangle(proj, faces[f], s)) facing[f] = s.area > 0 ? 1 : -1;
  }
  std::vector<char> sil(topo.edges.size(), 0);
  for (std::size_t e = 0; e < topo.edges.size(); ++e) {
    int count = 0, front = 0;
    for (auto f : topo.edge_faces[e]) {
      if (facing[f] == 0) continue;
      ++count;
      front += facing[f] > 0;
    }
    sil[e] = count == 1 || (count > 1 && front > 0 && front < count);
  }
  return sil;
}

namespace {

struct ScreenPoint {
  double x, y;
};

ScreenPoint to_screen(const Vec3d& ndc, int width, int height) {
  return {(ndc.x + 1) * width / 2, (1 - ndc.y) * height / 2};
}

// Crossing of edge (p0, p1) with the axis line through the segment from pixel
// center (cx, cy) to the next center along x (vertical = false) or y.
bool crossing(ScreenPoint p0, ScreenPoint p1, double cx, double cy,
    bool vertical, double& t) {
  if (vertical) {
    std::swap(p0.x, p0.y);
    std::swap(p1.x, p1.y);
    std::swap(cx, cy);
  }
  if ((p0.y <= cy) == (p1.y <= cy)) return false;
  auto xc = p0.x + (cy - p0.y) * (p1.x - p0.x) / (p1.y - p0.y);
  t       = xc - cx;
  return t >= 0 && t <= 1;
}

// d t / d (p0.x, p0.y, p1.x, p1.y) in screen units.
std::array<double, 4> crossing_gradient(
    ScreenPoint p0, ScreenPoint p1, double cx, double cy, bool vertical) {
  if (vertical) {
    std::swap(p0.x, p0.y);
    std::swap(p1.x, p1.y);
    std::swap(cx, cy);
  }
  auto dy = p1.y - p0.y;
  auto s  = (cy - p0.y) / dy;
  auto dx = p1.x - p0.x;
  std::array<double, 4> g{1 - s, dx * (cy - p1.y) / (dy * dy), s, -dx * (cy - p0.y) / (dy * dy)};
  if (vertical) {
    std::swap(g[0], g[1]);
    std::swap(g[2], g[3]);
  }
  return g;
}

// Total blend weight each pixel receives within one pass. A pixel between
// two nearby crossings can collect more than 1; its weights are then
// normalized so the result stays a convex combination.
std::vector<double> blend_weight_totals(
    const std::vector<AntialiasTrace::Blend>& blends, std::size_t pixels) {
  std::vector<double> total(pixels, 0.0);
  for (const auto& bl : blends) {
    total[bl.a] += 1 - bl.t;
    total[bl.b] += bl.t;
  }
  return total;
}

// `out` starts as a copy of `in`. Blended pixels are written in convex form,
// keep * c_p + sum w_j c_j, so non-negative inputs stay non-negative.
void apply_blends(const Image& in, Image& out, const std::vector<AntialiasTrace::Blend>& blends,
    const std::vector<double>& total) {
  auto C = in.channels;
  for (const auto& bl : blends)
    for (auto p : {bl.a, bl.b}) {
      auto keep = total[p] >= 1 ? 0.0 : 1 - total[p];
      for (int c = 0; c < C; ++c) out.data[p * C + c] = keep * in.data[p * C + c];
    }
  for (const auto& bl : blends) {
    auto wa = (1 - bl.t) / std::max(1.0, total[bl.a]);
    auto wb = bl.t / std::max(1.0, total[bl.b]);
    for (int c = 0; c < C; ++c) {
      out.data[bl.a * C + c] += wa * in.data[bl.b * C + c];
      out.data[bl.b * C + c] += wb * in.data[bl.a * C + c];
    }
  }
}

void antialias_pass(const Image& in, Image& out, const RasterOutput& raster,
    const Projected& proj, std::span<const Face> faces, const EdgeTopology& topo,
    const std::vector<char>& sil, bool vertical,
    std::vector<AntialiasTrace::Blend>* blends) {
  std::vector<AntialiasTrace::Blend> local;
  if (!blends) blends = &local;
  auto W = raster.width, H = raster.height;
  auto xe = vertical ? W : W - 1, ye = vertical ? H - 1 : H;
  for (int y = 0; y < ye; ++y) {
    for (int x = 0; x < xe; ++x) {
      auto a  = static_cast<std::size_t>(y) * W + x;
      auto b  = vertical ? a + W : a + 1;
      auto ta = raster.triangle_id[a], tb = raster.triangle_id[b];
      if (ta == tb) continue;
      int cand[2] = {ta, tb};
      if (ta >= 0 && tb >= 0 && raster.depth[b] < raster.depth[a]) std::swap(cand[0], cand[1]);
      bool   found = false;
      double t     = 0;
      int    v0 = 0, v1 = 0;
      for (auto f : cand) {
        if (f < 0 || found) continue;
        for (int k = 0; k < 3 && !found; ++k) {
          if (!sil[topo.face_edges[f][k]]) continue;
          v0 = faces[f][k];
          v1 = faces[f][(k + 1) % 3];
          found = crossing(to_screen(proj.ndc[v0], W, H), to_screen(proj.ndc[v1], W, H),
              x + 0.5, y + 0.5, vertical, t);
        }
      }
      if (!found) continue;
      blends->push_back({a, b, v0, v1, t, vertical});
    }
  }
  apply_blends(in, out, *blends, blend_weight_totals(*blends, static_cast<std::size_t>(W) * H));
}

void antialias_pass_backward(const Image& in, const RasterOutput& raster,
    const Projected& proj, const std::vector<AntialiasTrace::Blend>& blends,
    const Image& grad_out, Image& grad_in, std::span<Vec3d> grad_ndc) {
  auto W = raster.width, H = raster.height, C = in.channels;
  for (std::size_t i = 0; i < grad_out.data.size(); ++i) grad_in.data[i] += grad_out.data[i];
  auto total = blend_weight_totals(blends, static_cast<std::size_t>(W) * H);
  // Normalized pixels need their pass delta D: with S = sum of weights,
  // d out / d w_k = (c_k - c_p - D) / S and d out / d c_p = 0.
  Image delta = in;
  apply_blends(in, delta, blends, total);
  for (std::size_t i = 0; i < delta.data.size(); ++i) delta.data[i] -= in.data[i];
  for (const auto& bl : blends) {
    auto   na = std::max(1.0, total[bl.a]), nb = std::max(1.0, total[bl.b]);
    auto   wa = (1 - bl.t) / na, wb = bl.t / nb;
    double gt = 0;
    for (int c = 0; c < C; ++c) {
      auto ca = in.data[bl.a * C + c], cb = in.data[bl.b * C + c];
      auto ga = grad_out.data[bl.a * C + c], gb = grad_out.data[bl.b * C + c];
      grad_in.data[bl.a * C + c] += -wa * ga + wb * gb;
      grad_in.data[bl.b * C + c] += wa * ga - wb * gb;
      auto da = total[bl.a] > 1 ? delta.data[bl.a * C + c] : 0.0;
      auto db = total[bl.b] > 1 ? delta.data[bl.b * C + c] : 0.0;
      gt += -ga * (cb - ca - da) / na + gb * (ca - cb - db) / nb;
    }
    if (gt == 0 || grad_ndc.empty()) continue;
    auto x  = static_cast<double>(bl.a % W) + 0.5, y = static_cast<double>(bl.a / W) + 0.5;
    auto dg = crossing_gradient(to_screen(proj.ndc[bl.v0], W, H),
        to_screen(proj.ndc[bl.v1], W, H), x, y, bl.vertical);
    // screen x = (ndc.x + 1) W/2, screen y = (1 - ndc.y) H/2
    grad_ndc[bl.v0].x += gt * dg[0] * W / 2;
    grad_ndc[bl.v0].y -= gt * dg[1] * H / 2;
    grad_ndc[bl.v1].x += gt * dg[2] * W / 2;
    grad_ndc[bl.v1].y -= gt * dg[3] * H / 2;
  }
}

}  // namespace

Image antialias(const Image& color, const RasterOutput& raster,
    const Projected& proj, std::span<const Face> faces,
    const EdgeTopology& topo, AntialiasTrace* trace) {
  if (color.width != raster.width || color.height != raster.height)
    throw std::invalid_argument("antialias: image and raster resolution differ");
  auto sil = silhouette_edges(topo, proj, faces);
  auto mid = color;
  antialias_pass(color, mid, raster, proj, faces, topo, sil, false,
      trace ? &trace->horizontal : nullptr);
  auto out = mid;
  antialias_pass(mid, out, raster, proj, faces, topo, sil, true,
      trace ? &trace->vertical : nullptr);
  if (trace) trace->after_horizontal = std::move(mid);
  return out;
}

void antialias_backward(const Image& color, const RasterOutput& raster,
    const Projected& proj, const AntialiasTrace& trace, const Image& grad_out,
    Image& grad_color, std::span<Vec3d> grad_ndc) {
  Image grad_mid(grad_out.width, grad_out.height, grad_out.channels);
  antialias_pass_backward(
      trace.after_horizontal, raster, proj, trace.vertical, grad_out, grad_mid, grad_ndc);
  antialias_pass_backward(color, raster, proj, trace.horizontal, grad_mid, grad_color, grad_ndc);
}

}  // namespace apfit
