#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "apfit/adjoint.hpp"
#include "apfit/rasterizer.hpp"
#include "test_util.hpp"

using namespace apfit;
using apfit::test::add_flat;
using apfit::test::flatten;
using apfit::test::unflatten;

namespace {

// Positions given directly in NDC (identity view-projection, w = 1).
Projected ndc_projection(std::span<const Vec3d> ndc) { return project(ndc, Mat4{}); }

Vec2d center_ndc(int x, int y, int w, int h) {
  return {2.0 * (x + 0.5) / w - 1.0, 1.0 - 2.0 * (y + 0.5) / h};
}

// Quad [x0, x1] x [y0, y1] at depth z, counter-clockwise, two triangles.
void add_quad(std::vector<Vec3d>& p, std::vector<Face>& f, double x0, double x1, double y0,
    double y1, double z) {
  int b = static_cast<int>(p.size());
  p.insert(p.end(), {{x0, y0, z}, {x1, y0, z}, {x1, y1, z}, {x0, y1, z}});
  f.push_back({b, b + 1, b + 2});
  f.push_back({b, b + 2, b + 3});
}

}  // namespace

// --- projection --------------------------------------------------------------

TEST(Project, TargetMapsToCenter) {
  auto cam = Camera::look_at({1, 2, 3}, {0.2, -0.1, 0.4}, {0, 1, 0}, 0.8, 64, 48, 0.1, 10);
  std::vector<Vec3d> p{{0.2, -0.1, 0.4}};
  auto               pr = project(p, cam.view_projection());
  EXPECT_NEAR(pr.ndc[0].x, 0, 1e-12);
  EXPECT_NEAR(pr.ndc[0].y, 0, 1e-12);
}

TEST(Project, NearPlaneMapsToMinusOne) {
  auto               cam = Camera::look_at({0, 0, 5}, {0, 0, 0}, {0, 1, 0}, 0.8, 64, 64, 0.5, 10);
  std::vector<Vec3d> p{{0, 0, 4.5}, {0.1, 0.05, -5}};
  auto               pr = project(p, cam.view_projection());
  EXPECT_NEAR(pr.ndc[0].z, -1, 1e-12);
  EXPECT_NEAR(pr.ndc[1].z, 1, 1e-12);
}

TEST(Project, BehindEyeIsFlaggedAndCulled) {
  auto cam = Camera::look_at({0, 0, 5}, {0, 0, 0}, {0, 1, 0}, 0.8, 16, 16, 0.5, 10);
  std::vector<Vec3d> p{{-1, -1, 0}, {1, -1, 0}, {0, 1, 6}};
  auto               pr = project(p, cam.view_projection());
  EXPECT_TRUE(pr.valid[0]);
  EXPECT_FALSE(pr.valid[2]);
  std::vector<Face> f{{0, 1, 2}};
  auto              r = rasterize(pr, f, 16, 16);
  for (auto id : r.triangle_id) EXPECT_EQ(id, -1);
}

TEST(Project, FdCheck) {
  auto cam = Camera::look_at({0.3, 0.4, 4}, {0, 0, 0}, {0, 1, 0}, 0.9, 32, 24, 0.1, 20);
  std::vector<Vec3d> p{{0.1, 0.2, 0.3}, {-0.5, 0.4, -0.2}, {0.7, -0.6, 0.9}};
  auto               vp = cam.view_projection();
  Stage              s;
  s.forward  = [&](std::span<const double> x) { return flatten(project(unflatten(x), vp).ndc); };
  s.backward = [&](std::span<const double> x, std::span<const double> g, std::span<double> gx) {
    auto               pr = project(unflatten(x), vp);
    std::vector<Vec3d> gp(3);
    project_backward(pr, vp, unflatten(g), gp);
    add_flat(gp, gx);
  };
  auto r = fd_check(s, flatten(p), 1e-4, 9);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

// --- coverage ----------------------------------------------------------------

TEST(Rasterize, FullScreenTriangle) {
  std::vector<Vec3d> p{{-1, -1, 0}, {3, -1, 0}, {-1, 3, 0}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               r = rasterize(ndc_projection(p), f, 17, 9);
  for (auto id : r.triangle_id) EXPECT_EQ(id, 0);
}

TEST(Rasterize, CenterOnVertexZero) {
  auto               c = center_ndc(2, 3, 8, 8);
  std::vector<Vec3d> p{{c.x, c.y, 0}, {c.x, c.y - 0.5, 0}, {c.x + 0.5, c.y, 0}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               r   = rasterize(ndc_projection(p), f, 8, 8);
  auto               pix = 3 * 8 + 2;
  ASSERT_EQ(r.triangle_id[pix], 0);
  EXPECT_EQ(r.u[pix], 1.0);
  EXPECT_EQ(r.v[pix], 0.0);
}

TEST(Rasterize, DiagonalSplitSquareOwnership) {
  const int          N = 64;
  std::vector<Vec3d> p{{-1, -1, 0}, {1, -1, 0}, {1, 1, 0}, {-1, 1, 0}};
  std::vector<Face>  f{{0, 1, 2}, {0, 2, 3}};
  auto               r = rasterize(ndc_projection(p), f, N, N);
  int                count[2] = {0, 0};
  int                on_diagonal = 0;
  for (int y = 0; y < N; ++y)
    for (int x = 0; x < N; ++x) {
      auto id = r.triangle_id[y * N + x];
      ASSERT_GE(id, 0);
      ++count[id];
      // independent oracle: the diagonal runs through centers with x + y = N - 1;
      // below-right of it (x + y > N - 1) is the first triangle
      if (x + y > N - 1) EXPECT_EQ(id, 0);
      if (x + y < N - 1) EXPECT_EQ(id, 1);
      on_diagonal += x + y == N - 1;
    }
  EXPECT_EQ(on_diagonal, N);
  EXPECT_EQ(count[0] + count[1], N * N);
  EXPECT_EQ(std::max(count[0], count[1]), 2080);
  EXPECT_EQ(std::min(count[0], count[1]), 2016);
}

TEST(Rasterize, SharedEdgesCoverEachPixelOnce) {
  // fan of triangles around the center with edges through many pixel centers
  std::vector<Vec3d> p{{0, 0, 0}};
  std::vector<Face>  f;
  const int          n = 8;
  for (int k = 0; k < n; ++k) {
    auto a = 2 * pi * k / n;
    p.push_back({2 * std::cos(a), 2 * std::sin(a), 0});
  }
  for (int k = 0; k < n; ++k) f.push_back({0, 1 + k, 1 + (k + 1) % n});
  auto pr = ndc_projection(p);
  auto r  = rasterize(pr, f, 32, 32);
  // brute force: count how many triangles strictly or tie-include each center
  for (std::size_t pix = 0; pix < r.pixel_count(); ++pix) EXPECT_GE(r.triangle_id[pix], 0);
  // each pixel belongs to exactly one: rasterizing triangles separately
  std::vector<int> hits(r.pixel_count(), 0);
  for (std::size_t t = 0; t < f.size(); ++t) {
    std::vector<Face> one{f[t]};
    auto              rt = rasterize(pr, one, 32, 32);
    for (std::size_t pix = 0; pix < r.pixel_count(); ++pix) hits[pix] += rt.triangle_id[pix] >= 0;
  }
  for (auto h : hits) EXPECT_EQ(h, 1);
}

TEST(Rasterize, DepthTieGoesToLowerIndex) {
  std::vector<Vec3d> p;
  std::vector<Face>  f;
  add_quad(p, f, -1, 1, -1, 1, 0.2);
  add_quad(p, f, -1, 1, -1, 1, 0.2);
  auto r = rasterize(ndc_projection(p), f, 8, 8);
  for (auto id : r.triangle_id) EXPECT_LT(id, 2);
}

TEST(Rasterize, BarycentricsArePartitionOfUnity) {
  std::vector<Vec3d> p{{-0.9, -0.8, 0.1}, {0.7, -0.6, 0.3}, {0.1, 0.9, -0.2}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               r = rasterize(ndc_projection(p), f, 40, 30);
  int                covered = 0;
  for (std::size_t pix = 0; pix < r.pixel_count(); ++pix) {
    if (r.triangle_id[pix] < 0) continue;
    ++covered;
    auto w2 = 1 - r.u[pix] - r.v[pix];
    EXPECT_NEAR(w2 + r.u[pix] + r.v[pix], 1.0, 2e-16);
    EXPECT_GE(r.u[pix], -1e-12);
    EXPECT_GE(r.v[pix], -1e-12);
    EXPECT_LE(r.u[pix] + r.v[pix], 1 + 1e-9);
  }
  EXPECT_GT(covered, 100);
}

// --- interpolation -----------------------------------------------------------

TEST(Interpolate, ConstantAttribute) {
  std::vector<Vec3d>  p{{-0.9, -0.8, 0}, {0.7, -0.6, 0}, {0.1, 0.9, 0}};
  std::vector<Face>   f{{0, 1, 2}};
  auto                r = rasterize(ndc_projection(p), f, 20, 20);
  std::vector<double> attr{0.3, 0.3, 0.3};
  auto                out = interpolate(attr, 1, f, r);
  for (std::size_t pix = 0; pix < r.pixel_count(); ++pix)
    EXPECT_NEAR(out.data[pix], r.triangle_id[pix] >= 0 ? 0.3 : 0.0, 1e-15);
}

TEST(Interpolate, ReproducesAffineAttributes) {
  std::vector<Vec3d> p{{-0.9, -0.8, 0}, {0.7, -0.6, 0}, {0.1, 0.9, 0}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               r = rasterize(ndc_projection(p), f, 33, 27);
  std::vector<double> attr;
  for (const auto& q : p) attr.insert(attr.end(), {q.x, 2 * q.y - 0.5 * q.x + 3});
  auto out = interpolate(attr, 2, f, r);
  for (std::size_t pix = 0; pix < r.pixel_count(); ++pix) {
    if (r.triangle_id[pix] < 0) continue;
    auto c = r.pixel_center(pix);
    EXPECT_NEAR(out.data[2 * pix], c.x, 1e-9);
    EXPECT_NEAR(out.data[2 * pix + 1], 2 * c.y - 0.5 * c.x + 3, 1e-9);
  }
}

TEST(Interpolate, AttributeAdjointFd) {
  std::vector<Vec3d>  p{{-0.9, -0.8, 0}, {0.7, -0.6, 0}, {0.1, 0.9, 0}, {0.9, 0.8, 0}};
  std::vector<Face>   f{{0, 1, 2}, {1, 3, 2}};
  auto                r = rasterize(ndc_projection(p), f, 16, 16);
  std::vector<double> attr{0.1, 0.5, -0.3, 0.8, 1.2, 0.4, -0.7, 0.2};
  Stage               s;
  s.forward  = [&](std::span<const double> a) { return interpolate(a, 2, f, r).data; };
  s.backward = [&](std::span<const double> a, std::span<const double> g, std::span<double> ga) {
    Image go(16, 16, 2);
    go.data.assign(g.begin(), g.end());
    interpolate_backward(a, 2, f, r, go, ga, {}, {});
  };
  auto res = fd_check(s, attr, 1e-4, attr.size());
  EXPECT_LT(res.max_relative_error, 1e-6);
}

TEST(Interpolate, BarycentricAdjointThroughNdcFd) {
  std::vector<Vec3d>  p{{-0.9, -0.8, 0.1}, {0.7, -0.6, 0.3}, {0.1, 0.9, -0.2}};
  std::vector<Face>   f{{0, 1, 2}};
  std::vector<double> attr{0.2, 1.5, -0.4, 0.9, -1.1, 0.3};
  const int           W = 12, H = 10;
  Stage               s;
  s.forward = [&](std::span<const double> x) {
    auto pr = ndc_projection(unflatten(x));
    return interpolate(attr, 2, f, rasterize(pr, f, W, H)).data;
  };
  s.backward = [&](std::span<const double> x, std::span<const double> g, std::span<double> gx) {
    auto                pr = ndc_projection(unflatten(x));
    auto                r  = rasterize(pr, f, W, H);
    Image               go(W, H, 2);
    std::vector<double> gu(r.pixel_count()), gv(r.pixel_count());
    go.data.assign(g.begin(), g.end());
    interpolate_backward(attr, 2, f, r, go, {}, gu, gv);
    std::vector<Vec3d> gn(3);
    for (std::size_t pix = 0; pix < r.pixel_count(); ++pix)
      barycentric_backward(pr, f, r, pix, gu[pix], gv[pix], gn);
    add_flat(gn, gx);
  };
  s.coverage = [&](std::span<const double> x) {
    return rasterize(ndc_projection(unflatten(x)), f, W, H).fingerprint();
  };
  auto res = fd_check(s, flatten(p), 1e-4, 9);
  EXPECT_GE(res.fraction_within(1e-3), 0.95);
  EXPECT_LT(res.max_relative_error, 1e-6);
}

// --- MSAA --------------------------------------------------------------------

TEST(Msaa, FullyCoveredMatchesSingleSample) {
  std::vector<Vec3d> p{{-1, -1, 0}, {3, -1, 0}, {-1, 3, 0}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               pr = ndc_projection(p);
  auto               r1 = rasterize(pr, f, 8, 8);
  for (int S : {4, 8, 16}) {
    auto r = msaa_rasterize(pr, f, 8, 8, S);
    EXPECT_EQ(r.triangle_id, r1.triangle_id);
    EXPECT_EQ(r.u, r1.u);
    EXPECT_EQ(r.v, r1.v);
    for (auto c : r.coverage) EXPECT_EQ(c, 1.0);
  }
}

TEST(Msaa, HalfPlaneEdgeThroughPixel) {
  // a vertical edge through the centers of column 3, and a slanted one
  for (int S : {4, 8, 16}) {
    for (double slope : {0.0, 0.3}) {
      auto               c = center_ndc(3, 4, 8, 8);
      std::vector<Vec3d> p{
          {c.x - 10 * slope, c.y - 10, 0}, {c.x + 10 * slope, c.y + 10, 0}, {-10, c.y, 0}};
      std::vector<Face>  f{{0, 1, 2}};
      auto               r = msaa_rasterize(ndc_projection(p), f, 8, 8, S);
      auto               pix = 4 * 8 + 3;
      ASSERT_EQ(r.triangle_id[pix], 0) << S;
      EXPECT_NEAR(r.coverage[pix], 0.5, 1.0 / S) << S << " slope " << slope;
    }
  }
}

TEST(Msaa, SingleSampleEqualsRasterize) {
  std::vector<Vec3d> p{{-0.9, -0.8, 0.1}, {0.7, -0.6, 0.3}, {0.1, 0.9, -0.2}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               pr = ndc_projection(p);
  auto               a  = rasterize(pr, f, 19, 13);
  auto               b  = msaa_rasterize(pr, f, 19, 13, 1);
  EXPECT_EQ(a.triangle_id, b.triangle_id);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.depth, b.depth);
}

TEST(Msaa, UncoveredCenterUsesInsideBarycentrics) {
  std::vector<Vec3d> p{{-0.93, -0.81, 0.1}, {0.77, -0.62, 0.3}, {0.13, 0.91, -0.2}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               r = msaa_rasterize(ndc_projection(p), f, 23, 17, 16);
  for (std::size_t pix = 0; pix < r.pixel_count(); ++pix) {
    if (r.triangle_id[pix] < 0) continue;
    EXPECT_GT(r.coverage[pix], 0);
    EXPECT_GE(r.u[pix], -1e-12);
    EXPECT_GE(r.v[pix], -1e-12);
    EXPECT_LE(r.u[pix] + r.v[pix], 1 + 1e-9);
  }
}

TEST(Msaa, RejectsUnsupportedCount) {
  EXPECT_THROW(msaa_pattern(3), std::invalid_argument);
}

// --- depth peeling -----------------------------------------------------------

TEST(DepthPeel, OpaqueSceneLayerZeroIsRasterize) {
  std::vector<Vec3d> p{{-0.9, -0.8, 0.1}, {0.7, -0.6, 0.3}, {0.1, 0.9, -0.2}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               pr     = ndc_projection(p);
  auto               layers = depth_peel(pr, f, 16, 16, 8);
  ASSERT_EQ(layers.size(), 8u);
  auto r = rasterize(pr, f, 16, 16);
  EXPECT_EQ(layers[0].triangle_id, r.triangle_id);
  EXPECT_EQ(layers[0].u, r.u);
  EXPECT_EQ(layers[0].v, r.v);
  EXPECT_EQ(layers[0].depth, r.depth);
  for (int l = 1; l < 8; ++l)
    for (auto id : layers[l].triangle_id) EXPECT_EQ(id, -1);
}

TEST(DepthPeel, TwoParallelQuads) {
  std::vector<Vec3d> p;
  std::vector<Face>  f;
  add_quad(p, f, -0.5, 0.5, -0.5, 0.5, 0.6);   // far, triangles 0 and 1
  add_quad(p, f, -0.5, 0.5, -0.5, 0.5, -0.3);  // near, triangles 2 and 3
  auto layers = depth_peel(ndc_projection(p), f, 16, 16, 8);
  ASSERT_EQ(layers.size(), 8u);
  int covered = 0;
  for (std::size_t pix = 0; pix < layers[0].pixel_count(); ++pix) {
    auto id0 = layers[0].triangle_id[pix];
    if (id0 < 0) {
      for (const auto& l : layers) EXPECT_EQ(l.triangle_id[pix], -1);
      continue;
    }
    ++covered;
    EXPECT_GE(id0, 2);
    EXPECT_GE(layers[1].triangle_id[pix], 0);
    EXPECT_LT(layers[1].triangle_id[pix], 2);
    EXPECT_LT(layers[0].depth[pix], layers[1].depth[pix]);
    for (int l = 2; l < 8; ++l) EXPECT_EQ(layers[l].triangle_id[pix], -1);
  }
  EXPECT_EQ(covered, 64);
}

TEST(DepthPeel, LayersStrictlyIncreaseInDepth) {
  std::mt19937                           rng(11);
  std::uniform_real_distribution<double> d(-0.9, 0.9);
  std::vector<Vec3d>                     p;
  std::vector<Face>                      f;
  for (int t = 0; t < 12; ++t) {
    int b = static_cast<int>(p.size());
    for (int k = 0; k < 3; ++k) p.push_back({d(rng), d(rng), d(rng)});
    f.push_back({b, b + 1, b + 2});
  }
  auto layers = depth_peel(ndc_projection(p), f, 24, 24, 8);
  for (std::size_t pix = 0; pix < layers[0].pixel_count(); ++pix)
    for (int l = 1; l < 8; ++l) {
      if (layers[l].triangle_id[pix] < 0) continue;
      EXPECT_GE(layers[l - 1].triangle_id[pix], 0);
      EXPECT_GT(layers[l].depth[pix], layers[l - 1].depth[pix]);
    }
}

// --- antialiasing ------------------------------------------------------------

namespace {

struct AaScene {
  std::vector<Vec3d> p;
  std::vector<Face>  f;
  EdgeTopology       topo;
};

// Quad covering the left part of the screen, right edge at ndc x = edge_x,
// extending past the top and bottom.
AaScene left_quad(double edge_x) {
  AaScene s;
  add_quad(s.p, s.f, -2, edge_x, -2, 2, 0);
  s.topo = build_edge_topology(s.f);
  return s;
}

Image two_tone(const RasterOutput& r, double fg, double bg) {
  Image img(r.width, r.height, 1);
  for (std::size_t pix = 0; pix < r.pixel_count(); ++pix)
    img.data[pix] = r.triangle_id[pix] >= 0 ? fg : bg;
  return img;
}

}  // namespace

TEST(Antialias, UniformIdsPassThrough) {
  auto s   = left_quad(5);  // covers the whole screen
  auto pr  = ndc_projection(s.p);
  auto r   = rasterize(pr, s.f, 8, 8);
  Image c(8, 8, 3);
  std::mt19937 rng(1);
  for (auto& v : c.data) v = std::uniform_real_distribution<double>(0, 1)(rng);
  // both triangles present but the shared diagonal is not a silhouette
  EXPECT_EQ(antialias(c, r, pr, s.f, s.topo), c);
}

TEST(Antialias, MidwayEdgeGivesEvenBlend) {
  auto s  = left_quad(0.0);
  auto pr = ndc_projection(s.p);
  auto r  = rasterize(pr, s.f, 8, 8);
  auto c  = two_tone(r, 1.0, 0.2);
  auto out = antialias(c, r, pr, s.f, s.topo);
  for (int y = 0; y < 8; ++y) {
    EXPECT_NEAR(out.at(3, y), 0.6, 1e-12);
    EXPECT_NEAR(out.at(4, y), 0.6, 1e-12);
    for (int x : {0, 1, 2, 5, 6, 7}) EXPECT_EQ(out.at(x, y), c.at(x, y));
  }
}

TEST(Antialias, PixelsAwayFromBoundariesAreBitIdentical) {
  std::vector<Vec3d> p{{-0.7, -0.6, 0.1}, {0.6, -0.5, 0.2}, {0.05, 0.8, 0.0}};
  std::vector<Face>  f{{0, 1, 2}};
  auto               pr = ndc_projection(p);
  auto               r  = rasterize(pr, f, 20, 20);
  Image              c(20, 20, 2);
  std::mt19937       rng(2);
  for (auto& v : c.data) v = std::uniform_real_distribution<double>(0, 1)(rng);
  auto out = antialias(c, r, pr, f, build_edge_topology(f));
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      bool near_boundary = false;
      auto id            = r.triangle_id[y * 20 + x];
      for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= 20 || ny >= 20) continue;
        near_boundary |= r.triangle_id[ny * 20 + nx] != id;
      }
      if (!near_boundary) {
        EXPECT_EQ(out.at(x, y, 0), c.at(x, y, 0));
        EXPECT_EQ(out.at(x, y, 1), c.at(x, y, 1));
      }
    }
}

TEST(Antialias, EdgeGradientSignAndFd) {
  const int W = 8, H = 8;
  auto      s = left_quad(0.03);
  // inputs: ndc of the quad's right-edge vertices 1 and 2
  Stage st;
  auto  build = [&](std::span<const double> x) {
    auto p = s.p;
    p[1]   = {x[0], x[1], 0};
    p[2]   = {x[2], x[3], 0};
    return p;
  };
  st.forward = [&](std::span<const double> x) {
    auto pr = ndc_projection(build(x));
    auto r  = rasterize(pr, s.f, W, H);
    return antialias(two_tone(r, 1.0, 0.2), r, pr, s.f, s.topo).data;
  };
  st.backward = [&](std::span<const double> x, std::span<const double> g, std::span<double> gx) {
    auto           pr = ndc_projection(build(x));
    auto           r  = rasterize(pr, s.f, W, H);
    auto           c  = two_tone(r, 1.0, 0.2);
    AntialiasTrace trace;
    antialias(c, r, pr, s.f, s.topo, &trace);
    Image go(W, H, 1), gc(W, H, 1);
    go.data.assign(g.begin(), g.end());
    std::vector<Vec3d> gn(4);
    antialias_backward(c, r, pr, trace, go, gc, gn);
    gx[0] += gn[1].x;
    gx[1] += gn[1].y;
    gx[2] += gn[2].x;
    gx[3] += gn[2].y;
  };
  st.coverage = [&](std::span<const double> x) {
    return rasterize(ndc_projection(build(x)), s.f, W, H).fingerprint();
  };
  std::vector<double> x{0.03, -2, 0.08, 2};
  auto                r = fd_check(st, x, 1e-4, 4);
  EXPECT_TRUE(r.discontinuous.empty());
  EXPECT_GE(r.fraction_within(1e-3), 0.95);

  // moving the edge right (toward the dark side) brightens the dark pixel
  auto base  = st.forward(x);
  auto moved = st.forward(std::vector<double>{0.05, -2, 0.1, 2});
  EXPECT_GT(moved[4], base[4]);
}

namespace {

// Tall thin triangle: the top edge spans NDC x [x0, x1], the apex is at the
// bottom center, so near the top both side edges cross one pixel.
AaScene sliver(double x0, double x1) {
  AaScene s;
  s.p    = {{x0, 2, 0}, {0.5 * (x0 + x1), -2, 0}, {x1, 2, 0}};
  s.f    = {{0, 1, 2}};
  s.topo = build_edge_topology(s.f);
  return s;
}

}  // namespace

TEST(Antialias, SliverPixelStaysAConvexBlend) {
  // Row 0 (NDC y 0.875) crosses the sides at screen x 3.284 and 3.716, so
  // pixel 3 collects weight 0.784 from each pair and is normalized to 1/2.
  auto s   = sliver(-0.2, -0.05);
  auto pr  = ndc_projection(s.p);
  auto r   = rasterize(pr, s.f, 8, 8);
  auto c   = two_tone(r, 1.0, 0.2);
  auto out = antialias(c, r, pr, s.f, s.topo);
  double frac  = (2 - 0.875) / 4;
  double left  = (-0.2 + frac * 0.075 + 1) * 4;
  double right = (-0.05 - frac * 0.075 + 1) * 4;
  ASSERT_EQ(r.triangle_id[3], 0);
  EXPECT_NEAR(out.at(3, 0), 0.2, 1e-12);
  EXPECT_NEAR(out.at(2, 0), 0.2 + (1 - (left - 2.5)) * 0.8, 1e-12);
  EXPECT_NEAR(out.at(4, 0), 0.2 + (right - 3.5) * 0.8, 1e-12);
  for (double v : out.data) {
    EXPECT_GE(v, 0.2 - 1e-12);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
}

TEST(Antialias, NormalizedBlendGradientsMatchFd) {
  const int W = 8, H = 8;
  auto      base  = sliver(-0.2, -0.05);
  auto      build = [&](std::span<const double> x) {
    auto p = base.p;
    p[0].x = x[0];
    p[2].x = x[1];
    p[1].x = x[2];
    return p;
  };
  std::mt19937 rng(5);
  Image        bg(W, H, 1);
  for (auto& v : bg.data) v = std::uniform_real_distribution<double>(0, 1)(rng);
  auto shade = [&](const RasterOutput& r) {
    auto img = bg;
    for (std::size_t pix = 0; pix < r.pixel_count(); ++pix)
      if (r.triangle_id[pix] >= 0) img.data[pix] = 1.5;
    return img;
  };
  Stage st;
  st.forward = [&](std::span<const double> x) {
    auto pr = ndc_projection(build(x));
    auto r  = rasterize(pr, base.f, W, H);
    return antialias(shade(r), r, pr, base.f, base.topo).data;
  };
  st.backward = [&](std::span<const double> x, std::span<const double> g, std::span<double> gx) {
    auto           p  = build(x);
    auto           pr = ndc_projection(p);
    auto           r  = rasterize(pr, base.f, W, H);
    AntialiasTrace trace;
    auto           c = shade(r);
    antialias(c, r, pr, base.f, base.topo, &trace);
    Image go(W, H, 1), gc(W, H, 1);
    go.data.assign(g.begin(), g.end());
    std::vector<Vec3d> gn(p.size());
    antialias_backward(c, r, pr, trace, go, gc, gn);
    gx[0] += gn[0].x;
    gx[1] += gn[2].x;
    gx[2] += gn[1].x;
  };
  st.coverage = [&](std::span<const double> x) {
    return rasterize(ndc_projection(build(x)), base.f, W, H).fingerprint();
  };
  std::vector<double> x{-0.2, -0.05, -0.125};
  auto                r = fd_check(st, x, 1e-4, 8);
  EXPECT_TRUE(r.discontinuous.empty());
  EXPECT_EQ(r.coordinates.size(), 3u);
  EXPECT_GE(r.fraction_within(1e-3), 0.95);
}
