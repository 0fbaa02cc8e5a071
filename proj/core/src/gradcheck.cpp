#include "apfit/gradcheck.hpp"

#include <algorithm>
#include <memory>
#include <random>
#include <stdexcept>

#include "apfit/loss.hpp"

namespace apfit {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::vector<double> flat3(std::span<const Vec3d> v) {
  std::vector<double> out;
  out.reserve(v.size() * 3);
  for (const auto& p : v) out.insert(out.end(), {p.x, p.y, p.z});
  return out;
}

std::vector<Vec3d> vec3(std::span<const double> x) {
  std::vector<Vec3d> out(x.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {x[3 * i], x[3 * i + 1], x[3 * i + 2]};
  return out;
}

void add3(std::span<const Vec3d> v, std::span<double> out) {
  for (std::size_t i = 0; i < v.size(); ++i)
    for (int c = 0; c < 3; ++c) out[3 * i + c] += v[i][c];
}

std::vector<double> concat(std::initializer_list<std::span<const double>> parts) {
  std::vector<double> out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<double> random_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> out(n);
  for (auto& v : out) v = uniform(rng, lo, hi);
  return out;
}

std::vector<Vec3d> jitter(std::vector<Vec3d> p, Rng& rng, double amount) {
  for (auto& v : p)
    for (int c = 0; c < 3; ++c) v[c] += uniform(rng, -amount, amount);
  return p;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  return (h ^ v) * 1099511628211ull;
}

constexpr std::uint64_t fnv_basis = 1469598103934665603ull;

Image image_from(std::span<const double> x, int w, int h, int c) {
  Image img(w, h, c);
  std::copy(x.begin(), x.end(), img.data.begin());
  return img;
}

// --- geometry ----------------------------------------------------------------

std::vector<GradcheckCase> geometry_cases() {
  std::vector<GradcheckCase> out;
  Rng                        rng(11);

  {
    auto          m = make_icosahedron();
    GradcheckCase c{"geometry", "vertex_normals", {}, flat3(jitter(m.positions, rng, 0.1)), 36};
    c.stage.forward = [m](std::span<const double> x) {
      return flat3(compute_vertex_normals(vec3(x), m.faces));
    };
    c.stage.backward = [m](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      std::vector<Vec3d> gp(x.size() / 3);
      compute_vertex_normals_backward(vec3(x), m.faces, vec3(g), gp);
      add3(gp, gx);
    };
    out.push_back(std::move(c));
  }
  {
    auto m  = make_uv_sphere(8, 6);
    auto p  = jitter(m.positions, rng, 0.03);
    auto n  = compute_vertex_normals(p, m.faces);
    auto nv = p.size();
    auto split = [nv](std::span<const double> x) {
      return std::pair{vec3(x.subspan(0, 3 * nv)), vec3(x.subspan(3 * nv))};
    };
    GradcheckCase c{"geometry", "tangent_frame", {}, concat({flat3(p), flat3(n)}), 64};
    c.stage.forward = [m, split](std::span<const double> x) {
      auto [p, n] = split(x);
      auto tf     = compute_tangent_frame(m, p, n);
      return concat({flat3(tf.tangents), flat3(tf.bitangents)});
    };
    c.stage.backward = [m, split, nv](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      auto [p, n] = split(x);
      auto               tf = compute_tangent_frame(m, p, n);
      std::vector<Vec3d> gp(nv), gn(nv);
      compute_tangent_frame_backward(m, p, n, tf, vec3(g.subspan(0, 3 * nv)),
          vec3(g.subspan(3 * nv)), gp, gn);
      add3(gp, gx.subspan(0, 3 * nv));
      add3(gn, gx.subspan(3 * nv));
    };
    c.stage.coverage = [m, split](std::span<const double> x) {
      auto [p, n] = split(x);
      auto tf     = compute_tangent_frame(m, p, n);
      auto h      = fnv_basis;
      for (std::size_t i = 0; i < tf.signs.size(); ++i)
        h = mix(h, (tf.signs[i] > 0 ? 1 : 2) + 4 * tf.valid[i]);
      return h;
    };
    out.push_back(std::move(c));
  }
  {
    auto m   = make_icosahedron();
    auto adj = build_adjacency(m.positions.size(), m.faces);
    auto ref = uniform_laplacian(m.positions, adj);
    GradcheckCase c{"geometry", "laplacian_loss", {}, flat3(jitter(m.positions, rng, 0.2)), 36};
    c.stage.forward = [adj, ref](std::span<const double> x) {
      return std::vector<double>{laplacian_loss(vec3(x), adj, ref)};
    };
    c.stage.backward = [adj, ref](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      std::vector<Vec3d> gp(x.size() / 3);
      laplacian_loss_backward(vec3(x), adj, ref, g[0], gp);
      add3(gp, gx);
    };
    out.push_back(std::move(c));
  }
  {
    auto              m = make_icosahedron();
    constexpr int     B = 3;
    std::vector<Mat4> t(B);
    for (int b = 0; b < B; ++b)
      t[b] = translation({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)}) *
             rotation({uniform(rng, -1, 1), 1, uniform(rng, -1, 1)}, uniform(rng, -1, 1));
    auto          nv     = m.positions.size();
    auto          logits = random_values(rng, nv * B, -2, 2);
    GradcheckCase c{"geometry", "skinning", {}, concat({flat3(m.positions), logits}), 64};
    c.stage.forward = [t, nv](std::span<const double> x) {
      return flat3(skin(vec3(x.subspan(0, 3 * nv)), x.subspan(3 * nv), B, t));
    };
    c.stage.backward = [t, nv](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      std::vector<Vec3d> gp(nv);
      skin_backward(vec3(x.subspan(0, 3 * nv)), x.subspan(3 * nv), B, t, vec3(g), gp,
          gx.subspan(3 * nv));
      add3(gp, gx.subspan(0, 3 * nv));
    };
    out.push_back(std::move(c));
  }
  {
    auto          m    = make_icosahedron();
    auto          plan = plan_subdivision(m);
    GradcheckCase c{"geometry", "subdivision", {}, flat3(m.positions), 36};
    c.stage.forward = [plan](std::span<const double> x) {
      return flat3(subdivide_positions(plan, vec3(x)));
    };
    c.stage.backward = [plan](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      std::vector<Vec3d> gp(x.size() / 3);
      subdivide_positions_backward(plan, vec3(g), gp);
      add3(gp, gx);
    };
    out.push_back(std::move(c));
  }
  {
    auto  m   = make_uv_sphere(8, 6);
    auto  uvs = vertex_uvs(m);
    auto  nv  = m.positions.size();
    Image map(6, 5, 1);
    for (auto& v : map.data) v = uniform(rng, -0.1, 0.1);
    auto          n = compute_vertex_normals(m.positions, m.faces);
    GradcheckCase c{"geometry", "displacement", {},
        concat({flat3(m.positions), flat3(n), map.data}), 64};
    auto split = [nv](std::span<const double> x) {
      return std::tuple{vec3(x.subspan(0, 3 * nv)), vec3(x.subspan(3 * nv, 3 * nv)),
          image_from(x.subspan(6 * nv), 6, 5, 1)};
    };
    c.stage.forward = [uvs, split](std::span<const double> x) {
      auto [p, n, d] = split(x);
      return flat3(displace(p, n, uvs, d, WrapMode::repeat));
    };
    c.stage.backward = [uvs, split, nv](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      auto [p, n, d] = split(x);
      std::vector<Vec3d> gp(nv), gn(nv);
      Image              gd(d.width, d.height, 1);
      displace_backward(n, uvs, d, WrapMode::repeat, vec3(g), gp, gn, &gd);
      add3(gp, gx.subspan(0, 3 * nv));
      add3(gn, gx.subspan(3 * nv, 3 * nv));
      for (std::size_t i = 0; i < gd.data.size(); ++i) gx[6 * nv + i] += gd.data[i];
    };
    out.push_back(std::move(c));
  }
  return out;
}

// --- rasterizer --------------------------------------------------------------

// A small fan of overlapping triangles given directly in NDC.
struct NdcScene {
  std::vector<Vec3d> ndc;
  std::vector<Face>  faces;
  EdgeTopology       topo;
};

NdcScene ndc_scene(Rng& rng) {
  NdcScene s;
  s.ndc = {{-0.7, -0.6, 0.1}, {0.6, -0.7, 0.2}, {0.1, 0.75, 0.0}, {-0.8, 0.5, 0.4},
      {0.75, 0.4, -0.2}};
  s.ndc   = jitter(s.ndc, rng, 0.05);
  s.faces = {{0, 1, 2}, {0, 2, 3}, {1, 4, 2}};
  s.topo  = build_edge_topology(s.faces);
  return s;
}

std::vector<GradcheckCase> rasterizer_cases() {
  std::vector<GradcheckCase> out;
  Rng                        rng(12);
  constexpr int              W = 12, H = 10;

  {
    auto cam = Camera::look_at({0.5, 0.8, 3}, {0, 0, 0}, {0, 1, 0}, 0.9, W, H, 0.5, 10);
    auto vp  = cam.view_projection();
    auto p   = jitter(make_icosahedron().positions, rng, 0.1);
    GradcheckCase c{"rasterizer", "project", {}, flat3(p), 36};
    c.stage.forward = [vp](std::span<const double> x) { return flat3(project(vec3(x), vp).ndc); };
    c.stage.backward = [vp](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      auto               pr = project(vec3(x), vp);
      std::vector<Vec3d> gp(x.size() / 3);
      project_backward(pr, vp, vec3(g), gp);
      add3(gp, gx);
    };
    out.push_back(std::move(c));
  }

  auto scene = ndc_scene(rng);
  auto attrs = random_values(rng, scene.ndc.size() * 3, -1, 1);

  for (int samples : {1, 4}) {
    auto raster = [scene, samples](std::span<const double> x) {
      auto pr = project(vec3(x), Mat4{});
      return samples > 1 ? msaa_rasterize(pr, scene.faces, W, H, samples)
                         : rasterize(pr, scene.faces, W, H);
    };
    GradcheckCase c{"rasterizer", samples > 1 ? "barycentrics_msaa" : "barycentrics", {},
        flat3(scene.ndc), 15};
    c.stage.forward = [scene, attrs, raster](std::span<const double> x) {
      return interpolate(attrs, 3, scene.faces, raster(x)).data;
    };
    c.stage.backward = [scene, attrs, raster](std::span<const double> x,
                           std::span<const double> g, std::span<double> gx) {
      auto                pr = project(vec3(x), Mat4{});
      auto                r  = raster(x);
      std::vector<double> ga(attrs.size()), gu(r.pixel_count()), gv(r.pixel_count());
      interpolate_backward(attrs, 3, scene.faces, r, image_from(g, W, H, 3), ga, gu, gv);
      std::vector<Vec3d> gndc(x.size() / 3);
      for (std::size_t p = 0; p < r.pixel_count(); ++p)
        barycentric_backward(pr, scene.faces, r, p, gu[p], gv[p], gndc);
      add3(gndc, gx);
    };
    c.stage.coverage = [raster](std::span<const double> x) { return raster(x).fingerprint(); };
    out.push_back(std::move(c));
  }
  {
    auto          r = rasterize(project(scene.ndc, Mat4{}), scene.faces, W, H);
    GradcheckCase c{"rasterizer", "interpolate", {}, attrs, 15};
    c.stage.forward = [scene, r](std::span<const double> x) {
      return interpolate(x, 3, scene.faces, r).data;
    };
    c.stage.backward = [scene, r](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      std::vector<double> gu(r.pixel_count()), gv(r.pixel_count());
      interpolate_backward(x, 3, scene.faces, r, image_from(g, W, H, 3), gx, gu, gv);
    };
    out.push_back(std::move(c));
  }
  {
    auto nv     = scene.ndc.size();
    auto colors = random_values(rng, static_cast<std::size_t>(W) * H * 3, 0, 1);
    auto split  = [nv](std::span<const double> x) {
      return std::pair{vec3(x.subspan(0, 3 * nv)), image_from(x.subspan(3 * nv), W, H, 3)};
    };
    GradcheckCase c{"rasterizer", "antialias", {}, concat({flat3(scene.ndc), colors}), 96};
    c.stage.forward = [scene, split](std::span<const double> x) {
      auto [ndc, color] = split(x);
      auto pr           = project(ndc, Mat4{});
      auto r            = rasterize(pr, scene.faces, W, H);
      return antialias(color, r, pr, scene.faces, scene.topo).data;
    };
    c.stage.backward = [scene, split, nv](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      auto [ndc, color] = split(x);
      auto           pr = project(ndc, Mat4{});
      auto           r  = rasterize(pr, scene.faces, W, H);
      AntialiasTrace trace;
      antialias(color, r, pr, scene.faces, scene.topo, &trace);
      Image              gc(W, H, 3);
      std::vector<Vec3d> gndc(nv);
      antialias_backward(color, r, pr, trace, image_from(g, W, H, 3), gc, gndc);
      add3(gndc, gx.subspan(0, 3 * nv));
      for (std::size_t i = 0; i < gc.data.size(); ++i) gx[3 * nv + i] += gc.data[i];
    };
    c.stage.coverage = [scene, split](std::span<const double> x) {
      auto [ndc, color] = split(x);
      auto           pr = project(ndc, Mat4{});
      auto           r  = rasterize(pr, scene.faces, W, H);
      AntialiasTrace trace;
      antialias(color, r, pr, scene.faces, scene.topo, &trace);
      auto h = r.fingerprint();
      for (const auto* list : {&trace.horizontal, &trace.vertical})
        for (const auto& b : *list) h = mix(mix(h, b.a), b.b);
      return h;
    };
    out.push_back(std::move(c));
  }
  return out;
}

// --- shading -----------------------------------------------------------------

std::vector<GradcheckCase> shading_cases() {
  std::vector<GradcheckCase> out;
  Rng                        rng(13);

  {
    PointLight light{{1.5, 2.0, 2.5}, {4, 3, 5}};
    Vec3d      camera{0.3, 0.5, 3};
    auto       pack = [&](Rng& r) {
      std::vector<double> x;
      x.insert(x.end(), {uniform(r, -.2, .2), uniform(r, -.2, .2), uniform(r, -.2, .2)});
      x.insert(x.end(), {uniform(r, -.2, .2), uniform(r, -.2, .2), 1.0});  // normal
      x.insert(x.end(), {1.0, uniform(r, -.2, .2), 0.0});                   // tangent
      x.insert(x.end(), {0.0, 1.0, uniform(r, -.2, .2)});                   // bitangent
      for (int i = 0; i < 4; ++i) x.push_back(uniform(r, 0.2, 0.9));        // kd
      x.insert(x.end(), {uniform(r, 0, .8), uniform(r, .3, .9), uniform(r, 0, 1)});
      x.insert(x.end(), {uniform(r, .4, .6), uniform(r, .4, .6), uniform(r, .8, 1)});
      x.insert(x.end(), {uniform(r, 0, .1), uniform(r, 0, .1), uniform(r, 0, .1)});  // ambient
      return x;
    };
    auto unpack = [](std::span<const double> x) {
      SurfacePoint<double> s;
      s.position   = {x[0], x[1], x[2]};
      s.normal     = {x[3], x[4], x[5]};
      s.tangent    = {x[6], x[7], x[8]};
      s.bitangent  = {x[9], x[10], x[11]};
      for (int i = 0; i < 4; ++i) s.kd[i] = x[12 + i];
      for (int i = 0; i < 3; ++i) s.orm[i] = x[16 + i];
      s.normal_map = {x[19], x[20], x[21]};
      return std::pair{s, Vec3d{x[22], x[23], x[24]}};
    };
    for (int k = 0; k < 3; ++k) {
      GradcheckCase c{"shading", "shade_point", {}, pack(rng), 25};
      c.stage.forward = [=](std::span<const double> x) {
        auto [s, amb] = unpack(x);
        auto r        = shade_point(s, light, camera, amb);
        return std::vector<double>{r.radiance.x, r.radiance.y, r.radiance.z, r.alpha};
      };
      c.stage.backward = [=](std::span<const double> x, std::span<const double> g,
                             std::span<double> gx) {
        auto [s, amb] = unpack(x);
        Vec3d ga{0, 0, 0};
        shade_point_backward(s, light, camera, amb, {g[0], g[1], g[2]}, g[3],
            std::span<double, surface_point_size>(gx.data(), surface_point_size), ga);
        for (int i = 0; i < 3; ++i) gx[22 + i] += ga[i];
      };
      out.push_back(std::move(c));
    }
  }
  {
    constexpr int W = 5, H = 4;
    auto rgba  = random_values(rng, W * H * 4, 0.05, 0.95);
    auto accum = random_values(rng, W * H * 3, 0, 2);
    GradcheckCase c{"shading", "blend_over", {}, concat({rgba, accum}), 64};
    c.stage.forward = [](std::span<const double> x) {
      return blend_over(image_from(x.subspan(0, W * H * 4), W, H, 4),
          image_from(x.subspan(W * H * 4), W, H, 3))
          .data;
    };
    c.stage.backward = [](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      Image gr(W, H, 4), ga(W, H, 3);
      blend_over_backward(image_from(x.subspan(0, W * H * 4), W, H, 4),
          image_from(x.subspan(W * H * 4), W, H, 3), image_from(g, W, H, 3), gr, ga);
      for (std::size_t i = 0; i < gr.data.size(); ++i) gx[i] += gr.data[i];
      for (std::size_t i = 0; i < ga.data.size(); ++i) gx[gr.data.size() + i] += ga.data[i];
    };
    out.push_back(std::move(c));
  }
  {
    GradcheckCase c{"shading", "tone_map", {}, random_values(rng, 32, 0.01, 8), 32};
    c.stage.forward = [](std::span<const double> x) {
      std::vector<double> y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = tone_map(x[i]);
      return y;
    };
    c.stage.backward = [](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * tone_map_derivative(x[i]);
    };
    out.push_back(std::move(c));
  }
  {
    // Trilinear lookups through a derived pyramid: texels and uvs.
    constexpr int TW = 8, TH = 6, N = 6;
    auto          texels = random_values(rng, TW * TH * 3, 0, 1);
    std::vector<double> lods(N);
    for (auto& l : lods) l = uniform(rng, 0.1, 2.4);
    auto uvs = random_values(rng, N * 2, 0.05, 0.95);
    auto split = [](std::span<const double> x) {
      return std::pair{make_pyramid(image_from(x.subspan(0, TW * TH * 3), TW, TH, 3), false),
          x.subspan(TW * TH * 3)};
    };
    GradcheckCase c{"shading", "texture_trilinear", {}, concat({texels, uvs}), 96};
    c.stage.forward = [split, lods](std::span<const double> x) {
      auto [pyr, uv] = split(x);
      std::vector<double> out(N * 3);
      for (int i = 0; i < N; ++i)
        texture_sample(pyr, {uv[2 * i], uv[2 * i + 1]}, lods[i], WrapMode::repeat,
            std::span<double>(&out[i * 3], 3));
      return out;
    };
    c.stage.backward = [split, lods](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      auto [pyr, uv] = split(x);
      auto grad      = zeros_like(pyr);
      for (int i = 0; i < N; ++i) {
        auto d = texture_sample_backward(pyr, {uv[2 * i], uv[2 * i + 1]}, lods[i],
            WrapMode::repeat, g.subspan(i * 3, 3), &grad);
        gx[TW * TH * 3 + 2 * i] += d.x;
        gx[TW * TH * 3 + 2 * i + 1] += d.y;
      }
      collapse_pyramid_grad(grad, false);
      for (std::size_t i = 0; i < grad.levels[0].data.size(); ++i) gx[i] += grad.levels[0].data[i];
    };
    // Texel cell boundaries are kinks of the bilinear filter.
    c.stage.coverage = [split, lods](std::span<const double> x) {
      auto [pyr, uv] = split(x);
      auto h         = fnv_basis;
      for (int i = 0; i < N; ++i)
        for (const auto& lvl : pyr.levels) {
          h = mix(h, static_cast<std::uint64_t>(std::floor(uv[2 * i] * lvl.width - 0.5) + 1000));
          h = mix(h,
              static_cast<std::uint64_t>(std::floor((1 - uv[2 * i + 1]) * lvl.height - 0.5) + 1000));
        }
      return h;
    };
    out.push_back(std::move(c));
  }
  return out;
}

// --- loss --------------------------------------------------------------------

std::vector<GradcheckCase> loss_cases() {
  std::vector<GradcheckCase> out;
  Rng                        rng(14);
  constexpr int              W = 6, H = 5;
  auto                       ref = image_from(random_values(rng, W * H * 3, 0, 3), W, H, 3);

  for (auto kind : {LossKind::l1_tonemapped, LossKind::mse}) {
    auto          img = random_values(rng, W * H * 3, 0.01, 3);
    GradcheckCase c{"loss", kind == LossKind::mse ? "mse" : "l1_tonemapped", {}, img, 48};
    c.stage.forward = [ref, kind](std::span<const double> x) {
      return std::vector<double>{image_loss(kind, image_from(x, W, H, 3), ref)};
    };
    c.stage.backward = [ref, kind](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      Image grad(W, H, 3);
      image_loss(kind, image_from(x, W, H, 3), ref, &grad, g[0]);
      for (std::size_t i = 0; i < grad.data.size(); ++i) gx[i] += grad.data[i];
    };
    out.push_back(std::move(c));
  }
  {
    auto m   = make_icosahedron();
    auto adj = build_adjacency(m.positions.size(), m.faces);
    auto dif = uniform_laplacian(m.positions, adj);
    auto nv  = m.positions.size();
    auto img = random_values(rng, W * H * 3, 0.01, 3);
    ScheduleState s;
    s.lambda_current = 0.7;
    GradcheckCase c{"loss", "objective", {},
        concat({img, flat3(jitter(m.positions, rng, 0.1))}), 64};
    c.stage.forward = [=](std::span<const double> x) {
      auto li = l1_tonemapped(image_from(x.subspan(0, W * H * 3), W, H, 3), ref);
      auto ll = laplacian_loss(vec3(x.subspan(W * H * 3)), adj, dif);
      return std::vector<double>{objective(li, ll, s)};
    };
    c.stage.backward = [=](std::span<const double> x, std::span<const double> g,
                           std::span<double> gx) {
      Image grad(W, H, 3);
      l1_tonemapped(image_from(x.subspan(0, W * H * 3), W, H, 3), ref, &grad, g[0]);
      for (std::size_t i = 0; i < grad.data.size(); ++i) gx[i] += grad.data[i];
      std::vector<Vec3d> gp(nv);
      laplacian_loss_backward(vec3(x.subspan(W * H * 3)), adj, dif, g[0] * s.lambda_current, gp);
      add3(gp, gx.subspan(W * H * 3));
    };
    out.push_back(std::move(c));
  }
  return out;
}

// --- pipeline ----------------------------------------------------------------

std::vector<GradcheckCase> pipeline_cases() {
  std::vector<GradcheckCase> out;
  auto                       asset = make_toy_asset();
  constexpr int              W = 24, H = 20;
  auto                       view = make_toy_view(W, H);

  RenderOptions aa;
  aa.width  = W;
  aa.height = H;
  aa.background = {0.1, 0.2, 0.3};

  auto add = [&](const std::string& op, const Asset& a, const RenderOptions& o,
                 std::vector<std::string> params, std::size_t samples) {
    GradcheckCase c{"pipeline", op, pipeline_stage(a, view, o, params), gather_params(a, params),
        samples};
    out.push_back(std::move(c));
  };
  add("render_positions", asset, aa, {"positions"}, 60);
  add("render_materials", asset, aa, {"kd", "orm", "normal", "ambient"}, 120);
  add("render_displacement", asset, aa, {"displacement"}, 60);

  auto msaa        = aa;
  msaa.aa          = AaMode::msaa;
  msaa.peel_passes = 2;
  auto translucent = asset;
  {
    auto& kd = translucent.params[translucent.kd.levels[0]].values;
    for (std::size_t i = 3; i < kd.size(); i += 4) kd[i] = 0.6;
  }
  add("render_msaa_peel", translucent, msaa, {"positions", "kd"}, 80);

  // The mip level is a function of screen-space derivatives and carries no
  // gradient, so trilinear lookups are checked on texels only.
  auto trilinear          = aa;
  trilinear.mip_filtering = true;
  add("render_trilinear", asset, trilinear, {"kd", "normal"}, 80);
  return out;
}

}  // namespace

const std::vector<std::string>& gradcheck_suites() {
  static const std::vector<std::string> suites{"geometry", "rasterizer", "shading", "loss",
      "pipeline"};
  return suites;
}

std::vector<GradcheckCase> gradcheck_cases(const std::string& suite) {
  if (suite == "all") {
    std::vector<GradcheckCase> all;
    for (const auto& s : gradcheck_suites()) {
      auto c = gradcheck_cases(s);
      std::move(c.begin(), c.end(), std::back_inserter(all));
    }
    return all;
  }
  if (suite == "geometry") return geometry_cases();
  if (suite == "rasterizer") return rasterizer_cases();
  if (suite == "shading") return shading_cases();
  if (suite == "loss") return loss_cases();
  if (suite == "pipeline") return pipeline_cases();
  throw std::invalid_argument("unknown gradcheck suite '" + suite + "'");
}

std::vector<GradcheckReport> run_gradcheck(const std::string& suite, double epsilon,
    double tolerance, double min_fraction) {
  std::vector<GradcheckReport> reports;
  for (auto& c : gradcheck_cases(suite)) {
    GradcheckReport r;
    r.suite           = c.suite;
    r.op              = c.op;
    try {
      r.result = fd_check(c.stage, c.inputs, epsilon, c.sample_count);
    } catch (const std::exception& e) {
      // e.g. a step large enough to leave the operation's domain
      r.error = e.what();
      reports.push_back(std::move(r));
      continue;
    }
    r.fraction_within = r.result.fraction_within(tolerance);
    r.passed          = !r.result.coordinates.empty() && r.fraction_within >= min_fraction;
    for (std::size_t i = 0; i < r.result.coordinates.size(); ++i)
      if (r.result.errors[i] > tolerance) r.failing.push_back(r.result.coordinates[i]);
    reports.push_back(std::move(r));
  }
  return reports;
}

// --- toy scene ---------------------------------------------------------------

Asset make_toy_asset(std::uint64_t seed) {
  Rng  rng(seed);
  auto mesh = make_uv_sphere(10, 7, 0.8);
  auto a    = make_asset(mesh, true);
  auto tex  = [&](int c, double lo, double hi) {
    Image img(8, 8, c);
    for (auto& v : img.data) v = uniform(rng, lo, hi);
    return img;
  };
  auto kd = tex(4, 0.2, 0.9);
  for (std::size_t i = 3; i < kd.data.size(); i += 4) kd.data[i] = 1.0;
  set_texture(a, TextureKind::kd, kd, true);
  auto orm = tex(3, 0.0, 1.0);
  for (std::size_t i = 1; i < orm.data.size(); i += 3) orm.data[i] = uniform(rng, 0.3, 0.9);
  set_texture(a, TextureKind::orm, orm, true);
  auto nm = tex(3, 0.35, 0.65);
  for (std::size_t i = 2; i < nm.data.size(); i += 3) nm.data[i] = uniform(rng, 0.85, 1.0);
  set_texture(a, TextureKind::normal, nm, true);
  set_displacement(a, tex(1, -0.05, 0.05), true);
  set_ambient(a, {0.05, 0.04, 0.03}, true);
  finalize(a);
  return a;
}

View make_toy_view(int width, int height) {
  View v;
  v.camera = Camera::look_at({0.6, 0.9, 2.6}, {0, 0, 0}, {0, 1, 0}, 0.9, width, height, 0.5, 10);
  v.light  = {{1.8, 2.2, 2.0}, {6, 6, 6}};
  return v;
}

std::vector<double> gather_params(const Asset& asset, const std::vector<std::string>& params) {
  std::vector<double> out;
  for (const auto& name : params) {
    auto id = asset.params.find(name);
    if (!id.valid()) throw std::invalid_argument("no parameter named '" + name + "'");
    const auto& v = asset.params[id].values;
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

Stage pipeline_stage(const Asset& asset, const View& view, const RenderOptions& options,
    const std::vector<std::string>& params) {
  auto base = std::make_shared<Asset>(asset);
  std::vector<ParamId> ids;
  for (const auto& name : params) {
    auto id = base->params.find(name);
    if (!id.valid()) throw std::invalid_argument("no parameter named '" + name + "'");
    ids.push_back(id);
  }
  auto load = [base, ids](std::span<const double> x) {
    std::size_t off = 0;
    for (auto id : ids) {
      auto& v = base->params[id].values;
      std::copy(x.begin() + off, x.begin() + off + v.size(), v.begin());
      off += v.size();
    }
  };

  Stage s;
  s.name    = "render";
  s.forward = [=](std::span<const double> x) {
    load(x);
    return render(*base, view, options).data;
  };
  s.backward = [=](std::span<const double> x, std::span<const double> g, std::span<double> gx) {
    load(x);
    base->params.zero_grads();
    auto  tape = render_forward(*base, view, options);
    Image grad(options.width, options.height, 3);
    std::copy(g.begin(), g.end(), grad.data.begin());
    render_backward(*base, tape, grad);
    std::size_t off = 0;
    for (auto id : ids) {
      const auto& gr = base->params[id].grad;
      for (std::size_t i = 0; i < gr.size(); ++i) gx[off + i] += gr[i];
      off += gr.size();
    }
  };
  s.coverage = [=](std::span<const double> x) {
    load(x);
    auto tape = render_forward(*base, view, options);
    auto h    = fnv_basis;
    for (const auto& layer : tape.layers) {
      h = mix(h, layer.raster.fingerprint());
      for (const auto* list : {&layer.aa.horizontal, &layer.aa.vertical})
        for (const auto& b : *list) h = mix(mix(mix(h, b.a), b.b), b.v0 * 7919 + b.v1);
    }
    for (std::size_t i = 0; i < tape.frame.signs.size(); ++i)
      h = mix(h, (tape.frame.signs[i] > 0 ? 1 : 2) + 4 * tape.frame.valid[i]);
    return h;
  };
  return s;
}

}  // namespace apfit
