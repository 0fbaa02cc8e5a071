#include <gtest/gtest.h>

#include <cmath>

#include "apfit/gradcheck.hpp"
#include "apfit/render.hpp"

using namespace apfit;

namespace {

// Quad [x0, x1] x [y0, y1] in the z = 0 plane with a full uv square.
Mesh quad_mesh(double x0, double x1, double y0, double y1) {
  Mesh m;
  m.positions = {{x0, y0, 0}, {x1, y0, 0}, {x1, y1, 0}, {x0, y1, 0}};
  m.uvs       = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  m.faces     = {{0, 1, 2}, {0, 2, 3}};
  m.uv_faces  = m.faces;
  return m;
}

// Unlit asset whose radiance is ambient * kd everywhere.
Asset flat_asset(Mesh mesh, const Vec3d& color) {
  auto  a = make_asset(std::move(mesh), false);
  Image kd(1, 1, 4, 1.0);
  set_texture(a, TextureKind::kd, kd, false);
  set_ambient(a, color, false);
  finalize(a);
  return a;
}

// Positions are NDC directly.
View ndc_view(int w, int h) {
  View v;
  v.camera.width  = w;
  v.camera.height = h;
  v.light         = {{0, 0, 5}, {0, 0, 0}};
  return v;
}

RenderOptions options(int w, int h, AaMode aa = AaMode::antialias) {
  RenderOptions o;
  o.width  = w;
  o.height = h;
  o.aa     = aa;
  return o;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST(Render, EmptyViewIsBackground) {
  auto a    = make_toy_asset();
  auto v    = make_toy_view(16, 12);
  v.camera  = Camera::look_at({0, 0, 3}, {0, 0, 6}, {0, 1, 0}, 0.9, 16, 12, 0.5, 10);
  auto o    = options(16, 12);
  o.background = {0.25, 0.5, 0.75};
  auto img  = render(a, v, o);
  for (std::size_t p = 0; p < img.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(img.data[p * 3 + c], o.background[c]);
}

TEST(Render, SphereCoversCenterNotCorners) {
  auto a   = make_toy_asset();
  auto v   = make_toy_view(32, 32);
  auto o   = options(32, 32);
  o.background = {0, 0, 0};
  auto img = render(a, v, o);
  double center = img.at(16, 16, 0) + img.at(16, 16, 1) + img.at(16, 16, 2);
  EXPECT_GT(center, 0);
  EXPECT_EQ(img.at(0, 0, 0), 0);
  EXPECT_EQ(img.at(31, 31, 2), 0);
  for (double x : img.data) {
    EXPECT_TRUE(std::isfinite(x));
    EXPECT_GE(x, 0);
  }
}

TEST(Render, ConstantSceneIsConstant) {
  auto a   = flat_asset(quad_mesh(-2, 2, -2, 2), {0.3, 0.6, 0.9});
  auto img = render(a, ndc_view(8, 8), options(8, 8));
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    EXPECT_DOUBLE_EQ(img.data[p * 3], 0.3);
    EXPECT_DOUBLE_EQ(img.data[p * 3 + 2], 0.9);
  }
}

TEST(Render, OpaquePeelingMatchesSingleLayer) {
  auto a  = make_toy_asset();
  auto v  = make_toy_view(24, 20);
  auto o1 = options(24, 20, AaMode::none);
  auto o8 = o1;
  o8.peel_passes = 8;
  auto t8        = render_forward(a, v, o8);
  EXPECT_EQ(t8.layers.size(), 8u);
  EXPECT_EQ(render(a, v, o1), t8.color);
}

TEST(Render, TranslucentLayersShowBackFaces) {
  auto a = make_toy_asset();
  auto& kd = a.params[a.kd.levels[0]].values;
  for (std::size_t i = 3; i < kd.size(); i += 4) kd[i] = 0.5;
  auto v  = make_toy_view(24, 20);
  auto o1 = options(24, 20, AaMode::none);
  auto o2 = o1;
  o2.peel_passes = 2;
  auto one = render(a, v, o1), two = render(a, v, o2);
  EXPECT_GT(max_abs_diff(one, two), 1e-6);
}

TEST(Render, MsaaRunsAndScalesAlphaByCoverage) {
  auto a  = flat_asset(quad_mesh(-2, 0.1, -2, 2), {1, 1, 1});
  auto o  = options(8, 8, AaMode::msaa);
  o.msaa_samples = 16;
  auto img = render(a, ndc_view(8, 8), o);
  // NDC x = 0.1 lies 0.4 of the way into column 4 (pixel width 0.25).
  EXPECT_NEAR(img.at(4, 3, 0), 0.4, 1.0 / 16 + 1e-12);
  EXPECT_DOUBLE_EQ(img.at(2, 3, 0), 1.0);
  EXPECT_DOUBLE_EQ(img.at(6, 3, 0), 0.0);
}

TEST(Render, BadOptionsThrow) {
  auto a = make_toy_asset();
  auto v = make_toy_view(8, 8);
  auto o = options(8, 8);
  o.peel_passes = 0;
  EXPECT_THROW(render(a, v, o), std::invalid_argument);
  o = options(8, 8, AaMode::msaa);
  o.msaa_samples = 3;
  EXPECT_THROW(render(a, v, o), std::invalid_argument);
  Asset raw = make_asset(make_plane(2), false);
  EXPECT_THROW(render(raw, v, options(8, 8)), std::logic_error);
}

// --- supersampling -----------------------------------------------------------

TEST(Supersample, OneSampleEqualsForwardRender) {
  auto a = make_toy_asset();
  auto v = make_toy_view(20, 16);
  auto o = options(20, 16);
  EXPECT_EQ(render_supersampled(a, v, o, 1), render(a, v, o));
}

TEST(Supersample, ConstantSceneIsUnchanged) {
  auto a = flat_asset(quad_mesh(-2, 2, -2, 2), {0.2, 0.4, 0.7});
  auto o = options(8, 6);
  EXPECT_EQ(render_supersampled(a, ndc_view(8, 6), o, 16), render(a, ndc_view(8, 6), o));
}

TEST(Supersample, HalfCoveredPixelIsCoveredFraction) {
  // Edge at NDC x = 0.125: half of column 4 of an 8-wide image.
  auto a   = flat_asset(quad_mesh(-2, 0.125, -2, 2), {0.8, 0.8, 0.8});
  auto o   = options(8, 8, AaMode::none);
  auto img = render_supersampled(a, ndc_view(8, 8), o, 16);
  EXPECT_NEAR(img.at(4, 2, 0), 0.5 * 0.8, 0.8 / 16);
  EXPECT_DOUBLE_EQ(img.at(3, 2, 0), 0.8);
  EXPECT_DOUBLE_EQ(img.at(5, 2, 0), 0.0);
}

TEST(Supersample, RejectsNonSquareCounts) {
  auto a = make_toy_asset();
  EXPECT_THROW(render_supersampled(a, make_toy_view(8, 8), options(8, 8), 8),
      std::invalid_argument);
  EXPECT_THROW(render_supersampled(a, make_toy_view(8, 8), options(8, 8), 0),
      std::invalid_argument);
}

// --- backward ----------------------------------------------------------------

TEST(RenderBackward, FrozenParametersReceiveNoGradient) {
  auto a = make_toy_asset();
  for (std::size_t i = 0; i < a.params.size(); ++i) a.params.at(i).learnable = false;
  auto  v    = make_toy_view(16, 16);
  auto  o    = options(16, 16);
  auto  tape = render_forward(a, v, o);
  Image g(16, 16, 3, 1.0);
  render_backward(a, tape, g);
  for (std::size_t i = 0; i < a.params.size(); ++i)
    for (double x : a.params.at(i).grad) EXPECT_EQ(x, 0);
}

TEST(RenderBackward, ZeroAdjointGivesZeroGradient) {
  auto  a    = make_toy_asset();
  auto  v    = make_toy_view(16, 16);
  auto  o    = options(16, 16);
  auto  tape = render_forward(a, v, o);
  render_backward(a, tape, Image(16, 16, 3));
  for (std::size_t i = 0; i < a.params.size(); ++i)
    for (double x : a.params.at(i).grad) EXPECT_EQ(x, 0);
}

TEST(RenderBackward, ShapeMismatchThrows) {
  auto a    = make_toy_asset();
  auto tape = render_forward(a, make_toy_view(8, 8), options(8, 8));
  EXPECT_THROW(render_backward(a, tape, Image(4, 4, 3)), std::invalid_argument);
}

TEST(RenderBackward, IdentitySkinningMatchesRestPose) {
  auto    a = make_toy_asset();
  BoneSet bones;
  bones.bone_count = 2;
  bones.frames.assign(3, std::vector<Mat4>(2));
  std::vector<double> logits(a.mesh.positions.size() * 2);
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = std::sin(0.7 * i);
  set_skinning(a, bones, logits, true);
  finalize(a);

  auto v    = make_toy_view(20, 20);
  auto o    = options(20, 20);
  auto rest = v, posed = v;
  posed.frame = 2;
  auto t_rest = render_forward(a, rest, o), t_posed = render_forward(a, posed, o);
  EXPECT_LT(max_abs_diff(t_rest.color, t_posed.color), 1e-12);

  Image g(20, 20, 3);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = std::cos(0.3 * i);
  auto b = a;
  render_backward(a, t_rest, g);
  render_backward(b, t_posed, g);
  const auto& ga = a.params[a.positions].grad;
  const auto& gb = b.params[b.positions].grad;
  double      scale = 0;
  for (double x : ga) scale = std::max(scale, std::abs(x));
  ASSERT_GT(scale, 0);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(ga[i], gb[i], 1e-9 * scale);
  // Identical bones make the blend weights irrelevant.
  for (double x : b.params[b.skin_logits].grad) EXPECT_NEAR(x, 0, 1e-9 * scale);
}

TEST(RenderBackward, PipelineMatchesFiniteDifferences) {
  for (const auto& r : run_gradcheck("pipeline")) {
    EXPECT_TRUE(r.passed) << r.op << " fraction " << r.fraction_within << " max "
                          << r.result.max_relative_error;
    EXPECT_GE(r.result.coordinates.size(), 20u) << r.op;
  }
}

TEST(RenderBackward, DerivedMipLevelsFoldIntoLevelZero) {
  auto a = make_toy_asset();
  EXPECT_EQ(a.kd.levels.size(), 1u);
  auto v = make_toy_view(8, 8);  // heavy minification
  auto o = options(8, 8);
  o.mip_filtering = true;
  auto tape = render_forward(a, v, o);
  render_backward(a, tape, Image(8, 8, 3, 1.0));
  double sum = 0;
  for (double x : a.params[a.kd.levels[0]].grad) sum += std::abs(x);
  EXPECT_GT(sum, 0);
}

TEST(Asset, IndependentLevelsRegisterEveryMip) {
  auto a               = make_asset(make_uv_sphere(8, 6), true);
  a.independent_levels = true;
  set_texture(a, TextureKind::kd, Image(8, 4, 4, 0.5), true);
  finalize(a);
  ASSERT_EQ(a.kd.levels.size(), 4u);  // 8x4, 4x2, 2x1, 1x1
  EXPECT_TRUE(a.params.find("kd.mip3").valid());
  EXPECT_EQ(a.params[a.kd.levels[3]].shape, (std::vector<std::size_t>{1, 1, 4}));
  EXPECT_EQ(a.pyramid(TextureKind::kd).level_count(), 4);
}

TEST(Asset, DefaultsAndValidation) {
  auto a = make_asset(make_uv_sphere(8, 6), true);
  finalize(a);
  EXPECT_EQ(a.params[a.normal.levels[0]].values, (std::vector<double>{0.5, 0.5, 1.0}));
  EXPECT_FALSE(a.params[a.kd.levels[0]].learnable);
  EXPECT_EQ(a.mesh.initial_differentials.size(), a.mesh.positions.size());
  EXPECT_THROW(set_texture(a, TextureKind::orm, Image(2, 2, 3), true), std::logic_error);
  EXPECT_THROW(set_texture(a, TextureKind::kd, Image(2, 2, 3), true), std::invalid_argument);
  Mesh no_uv = make_icosahedron();
  no_uv.uv_faces.clear();
  no_uv.uvs.clear();
  EXPECT_THROW(make_asset(no_uv, true), std::invalid_argument);
}

TEST(Asset, SubdivisionExtendsRenderMesh) {
  auto a        = make_asset(make_uv_sphere(8, 6), true);
  a.subdivision = 2;
  finalize(a);
  EXPECT_EQ(a.render_mesh.faces.size(), a.mesh.faces.size() * 16);
  auto img = render(a, make_toy_view(16, 16), options(16, 16));
  EXPECT_EQ(img.width, 16);
}
