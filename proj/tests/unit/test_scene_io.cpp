#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "apfit/error.hpp"
#include "apfit/scene_io.hpp"
#include "test_util.hpp"

using namespace apfit;
using apfit::test::TempDir;

namespace {

void write(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

// sRGB decode by bisection on the encoding curve, independent of the
// closed-form inverse under test.
double invert_srgb(double encoded) {
  auto encode = [](double l) {
    return l <= 0.0031308 ? 12.92 * l : 1.055 * std::pow(l, 1 / 2.4) - 0.055;
  };
  double lo = 0, hi = 1;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (encode(mid) < encoded ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

// --- OBJ ---------------------------------------------------------------------

TEST(Obj, MinimalTriangle) {
  TempDir dir;
  write(dir.file("tri.obj"), "# one triangle\nv 0 0 0\nv 1 0 0\nv 0 2 0.5\nf 1 2 3\n");
  auto obj = load_obj(dir.file("tri.obj"));
  ASSERT_EQ(obj.mesh.vertex_count(), 3u);
  ASSERT_EQ(obj.mesh.face_count(), 1u);
  EXPECT_EQ(obj.mesh.positions[2].y, 2.0);
  EXPECT_EQ(obj.mesh.positions[2].z, 0.5);
  EXPECT_FALSE(obj.mesh.has_uvs());
  EXPECT_FALSE(obj.has_material);
}

TEST(Obj, RoundtripKeepsVerticesUvsAndFaces) {
  TempDir dir;
  auto    mesh = make_uv_sphere(9, 6, 0.7);
  save_obj(mesh, dir.file("s.obj"));
  auto back = load_obj(dir.file("s.obj")).mesh;
  ASSERT_EQ(back.positions.size(), mesh.positions.size());
  ASSERT_EQ(back.uvs.size(), mesh.uvs.size());
  EXPECT_EQ(back.faces, mesh.faces);
  EXPECT_EQ(back.uv_faces, mesh.uv_faces);
  for (std::size_t i = 0; i < mesh.positions.size(); ++i)
    EXPECT_LT(length(back.positions[i] - mesh.positions[i]), 1e-6);
  for (std::size_t i = 0; i < mesh.uvs.size(); ++i) {
    EXPECT_NEAR(back.uvs[i].x, mesh.uvs[i].x, 1e-6);
    EXPECT_NEAR(back.uvs[i].y, mesh.uvs[i].y, 1e-6);
  }
}

TEST(Obj, FaceIndexOutOfRangeNamesTheLine) {
  TempDir dir;
  write(dir.file("bad.obj"), "v 0 0 0\nv 1 0 0\nf 1 2 3\n");
  auto msg = error_of([&] { load_obj(dir.file("bad.obj")); });
  EXPECT_NE(msg.find("bad.obj:3:"), std::string::npos) << msg;
}

TEST(Obj, MalformedVertexNamesTheLine) {
  TempDir dir;
  write(dir.file("bad.obj"), "v 0 0 0\nv 1 zero 0\n");
  auto msg = error_of([&] { load_obj(dir.file("bad.obj")); });
  EXPECT_NE(msg.find("bad.obj:2:"), std::string::npos) << msg;
}

TEST(Obj, QuadsFanAndLargerPolygonsNeedTheFlag) {
  TempDir dir;
  write(dir.file("quad.obj"), "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  auto quad = load_obj(dir.file("quad.obj")).mesh;
  ASSERT_EQ(quad.face_count(), 2u);
  EXPECT_EQ(quad.faces[0], (Face{0, 1, 2}));
  EXPECT_EQ(quad.faces[1], (Face{0, 2, 3}));

  write(dir.file("penta.obj"), "v 0 0 0\nv 1 0 0\nv 2 1 0\nv 1 2 0\nv 0 1 0\nf 1 2 3 4 5\n");
  auto msg = error_of([&] { load_obj(dir.file("penta.obj")); });
  EXPECT_NE(msg.find("penta.obj:6:"), std::string::npos) << msg;
  EXPECT_EQ(load_obj(dir.file("penta.obj"), true).mesh.face_count(), 3u);
}

TEST(Obj, NegativeIndicesAndSeparateUvIndices) {
  TempDir dir;
  write(dir.file("neg.obj"),
      "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvt 0.5 0.5\nvn 0 0 1\n"
      "f -3/-1/1 -2/-3/1 -1/-2/1\n");
  auto m = load_obj(dir.file("neg.obj")).mesh;
  EXPECT_EQ(m.faces[0], (Face{0, 1, 2}));
  EXPECT_EQ(m.uv_faces[0], (Face{3, 1, 2}));
}

TEST(Obj, MaterialMapsResolveRelativeToTheMtl) {
  TempDir dir;
  std::filesystem::create_directories(dir.file("tex"));
  write(dir.file("tex/m.mtl"),
      "newmtl skin\nKd 0.2 0.3 0.4\nmap_Kd albedo.png\nmap_Ks -bm 1 orm.pfm\nmap_bump nrm.pfm\n"
      "map_d alpha.png\n");
  write(dir.file("a.obj"), "mtllib tex/m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl skin\nf 1 2 3\n");
  auto obj = load_obj(dir.file("a.obj"));
  ASSERT_TRUE(obj.has_material);
  EXPECT_EQ(obj.material.name, "skin");
  EXPECT_EQ(obj.material.kd.y, 0.3);
  EXPECT_EQ(obj.material.map_kd, dir.file("tex/albedo.png"));
  EXPECT_EQ(obj.material.map_ks, dir.file("tex/orm.pfm"));
  EXPECT_EQ(obj.material.map_bump, dir.file("tex/nrm.pfm"));
  EXPECT_EQ(obj.material.map_d, dir.file("tex/alpha.png"));
}

TEST(Obj, MissingFileNamesThePath) {
  auto msg = error_of([] { load_obj("/nonexistent/mesh.obj"); });
  EXPECT_NE(msg.find("/nonexistent/mesh.obj"), std::string::npos);
}

// --- images ------------------------------------------------------------------

TEST(Pfm, RoundtripIsBitExact) {
  TempDir dir;
  Image   img(5, 3, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<double>(static_cast<float>(std::sin(0.37 * i) * 1e3 + 1e-7 * i));
  write_pfm(img, dir.file("a.pfm"));
  EXPECT_EQ(read_pfm(dir.file("a.pfm")), img);

  Image gray(4, 2, 1);
  for (std::size_t i = 0; i < gray.data.size(); ++i) gray.data[i] = 0.125 * static_cast<double>(i);
  write_pfm(gray, dir.file("g.pfm"));
  EXPECT_EQ(read_pfm(dir.file("g.pfm")), gray);
}

TEST(Pfm, LayoutIsLittleEndianBottomUp) {
  TempDir dir;
  Image   img(1, 2, 1);
  img.at(0, 0) = 1.0;  // top row
  img.at(0, 1) = 2.0;
  write_pfm(img, dir.file("a.pfm"));
  std::ifstream in(dir.file("a.pfm"), std::ios::binary);
  std::string   bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.substr(0, 11), "Pf\n1 2\n-1.0");
  auto  raster = bytes.substr(bytes.size() - 8);
  float first, second;
  std::memcpy(&first, raster.data(), 4);
  std::memcpy(&second, raster.data() + 4, 4);
  EXPECT_EQ(first, 2.0f);
  EXPECT_EQ(second, 1.0f);
}

TEST(Pfm, BigEndianFilesAreSwapped) {
  TempDir dir;
  std::string bytes = "Pf\n1 1\n1.0\n";
  unsigned char be[4] = {0x3f, 0xc0, 0x00, 0x00};  // 1.5f
  bytes.append(reinterpret_cast<char*>(be), 4);
  write(dir.file("be.pfm"), bytes);
  EXPECT_EQ(read_pfm(dir.file("be.pfm")).at(0, 0), 1.5);
}

TEST(Pfm, TruncatedRasterIsAnError) {
  TempDir dir;
  write(dir.file("t.pfm"), "PF\n4 4\n-1.0\nabc");
  EXPECT_THROW(read_pfm(dir.file("t.pfm")), Error);
}

TEST(Png, Value188DecodesToLinear) {
  TempDir dir;
  Image   raw(1, 1, 3, 188.0 / 255.0);
  write_png(raw, dir.file("v.png"), 8, false);
  auto lin = read_png(dir.file("v.png"), true);
  EXPECT_NEAR(lin.at(0, 0, 0), invert_srgb(188.0 / 255.0), 1e-9);
  EXPECT_NEAR(lin.at(0, 0, 0), 0.5029, 1e-4);
  EXPECT_NEAR(read_png(dir.file("v.png"), false).at(0, 0, 1), 188.0 / 255.0, 1e-15);
}

TEST(Png, SixteenBitRoundtripAndLinearAlpha) {
  TempDir dir;
  Image   img(3, 2, 4);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 4; ++c) img.at(x, y, c) = (1 + x + 3 * y + 7 * c) * 1000.0 / 65535.0;
  write_png(img, dir.file("a.png"), 16, false);
  auto back = read_png(dir.file("a.png"), false);
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 1e-12);

  write_png(img, dir.file("s.png"), 16, true);
  auto s = read_png(dir.file("s.png"), true);
  EXPECT_NEAR(s.at(2, 1, 3), img.at(2, 1, 3), 0.5 / 65535);  // alpha stays linear
  EXPECT_NEAR(s.at(2, 1, 0), img.at(2, 1, 0), 1e-4);
}

TEST(Png, UnsupportedBitDepthIsRejected) {
  TempDir dir;
  EXPECT_THROW(write_png(Image(1, 1, 3), dir.file("a.png"), 4, false), Error);
}

TEST(Texture, ChannelConversion) {
  TempDir dir;
  Image   gray(2, 1, 1);
  gray.at(0, 0) = 0.25;
  gray.at(1, 0) = 0.75;
  write_pfm(gray, dir.file("g.pfm"));
  auto rgba = load_texture(dir.file("g.pfm"), 4, false);
  ASSERT_EQ(rgba.channels, 4);
  EXPECT_EQ(rgba.at(1, 0, 0), 0.75);
  EXPECT_EQ(rgba.at(1, 0, 2), 0.75);
  EXPECT_EQ(rgba.at(1, 0, 3), 1.0);
  EXPECT_THROW(load_texture(dir.file("g.tga"), 3, false), Error);
}

// --- animation ---------------------------------------------------------------

TEST(Animation, RoundtripTwoBonesTwoFrames) {
  BoneSet b;
  b.bone_count = 2;
  b.frames     = {{translation({0.1, 0.2, 0.3}), rotation({0, 1, 0}, 0.4)},
          {scaling({1, 2, 3}), translation({-1, 0, 0.5}) * rotation({1, 0, 0}, 1.1)}};
  auto back = parse_animation(animation_json(b));
  ASSERT_EQ(back.bone_count, 2);
  ASSERT_EQ(back.frames.size(), 2u);
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 2; ++k) EXPECT_EQ(back.frames[f][k], b.frames[f][k]);
}

TEST(Animation, NonAffineAndRaggedFramesAreRejected) {
  std::string identity = "[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]";
  std::string bad      = "[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0.5,1]";
  EXPECT_NO_THROW(parse_animation("{\"bones\":1,\"frames\":[[" + identity + "]]}"));
  EXPECT_THROW(parse_animation("{\"bones\":1,\"frames\":[[" + bad + "]]}"), ConfigError);
  EXPECT_THROW(parse_animation("{\"bones\":2,\"frames\":[[" + identity + "]]}"), ConfigError);
  EXPECT_THROW(parse_animation("{\"bones\":1}"), ConfigError);
}

// --- views -------------------------------------------------------------------

TEST(Views, CameraAndLightJsonRoundtrip) {
  auto cam = Camera::look_at({1, 2, 3}, {0, 0, 0}, {0, 1, 0}, 0.8, 64, 32, 0.5, 20);
  auto back = parse_camera(camera_json(cam), 64, 32);
  EXPECT_EQ(back.view, cam.view);
  EXPECT_EQ(back.projection, cam.projection);
  auto look = parse_camera(
      R"({"eye":[1,2,3],"target":[0,0,0],"up":[0,1,0],"fovy_deg":45,"near":0.5,"far":20})", 64, 32);
  auto expect = Camera::look_at({1, 2, 3}, {0, 0, 0}, {0, 1, 0}, 45 * pi / 180, 64, 32, 0.5, 20);
  EXPECT_EQ(look.view, expect.view);
  EXPECT_EQ(look.projection, expect.projection);

  PointLight l{{4, 5, 6}, {7, 8, 9}};
  auto       lb = parse_light(light_json(l));
  EXPECT_EQ(lb.position.z, 6);
  EXPECT_EQ(lb.intensity.x, 7);
  EXPECT_THROW(parse_camera(R"({"eye":[1,2]})", 8, 8), ConfigError);
}

// --- scenes ------------------------------------------------------------------

TEST(Scene, PrimitiveWithProceduralTextures) {
  auto a = parse_scene(R"({
    "mesh": {"primitive": "sphere", "segments": 12, "rings": 8, "radius": 0.5},
    "kd": {"checker": {"resolution": [16, 16], "squares": 4,
                       "colors": [[0, 0, 0, 1], [1, 1, 1, 1]]}},
    "displacement": {"bumps": {"resolution": [32, 16], "frequency": 4, "amplitude": 0.05}},
    "ambient": [0.1, 0.1, 0.1],
    "learn": {"positions": false, "displacement": true}
  })", ".");
  EXPECT_TRUE(a.finalized);
  EXPECT_FALSE(a.learnable(a.positions));
  EXPECT_TRUE(a.learnable(a.kd.levels[0]));
  EXPECT_TRUE(a.learnable(a.displacement));
  EXPECT_FALSE(a.learnable(a.orm.levels[0]));  // left at its default
  auto kd = tensor_image(a.params[a.kd.levels[0]]);
  EXPECT_EQ(kd.at(0, 0, 0), 0.0);
  EXPECT_EQ(kd.at(4, 0, 0), 1.0);
  EXPECT_EQ(kd.at(4, 4, 0), 0.0);
  EXPECT_EQ(a.ambient_color().y, 0.1);
}

TEST(Scene, ObjMaterialFeedsTexturesAndMapD) {
  TempDir dir;
  Image   kd(2, 2, 3, 0.5);
  write_png(kd, dir.file("kd.png"), 8, false);
  Image alpha(2, 2, 1, 0.25);
  write_png(alpha, dir.file("alpha.png"), 16, false);
  write(dir.file("m.mtl"), "newmtl m\nmap_Kd kd.png\nmap_d alpha.png\n");
  write(dir.file("a.obj"),
      "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nusemtl m\nf 1/1 2/2 3/3\n");
  write(dir.file("scene.json"), R"({"mesh": "a.obj"})");
  auto a   = load_scene(dir.file("scene.json"));
  auto img = tensor_image(a.params[a.kd.levels[0]]);
  EXPECT_NEAR(img.at(1, 1, 0), invert_srgb(128.0 / 255.0), 1e-9);  // 0.5 quantized to 128
  EXPECT_NEAR(img.at(1, 1, 3), 0.25, 1e-4);
}

TEST(Scene, RejectsUnknownKeysAndMissingUvs) {
  EXPECT_THROW(parse_scene(R"({"mesh": {"primitive": "plane"}, "colour": 1})", "."), ConfigError);
  EXPECT_THROW(parse_scene(R"({"mesh": {"primitive": "plane"}, "learn": {"bones": true}})", "."),
      ConfigError);
  EXPECT_THROW(parse_scene(R"({"mesh": {"primitive": "torus"}})", "."), ConfigError);
  TempDir dir;
  write(dir.file("a.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  write(dir.file("s.json"), R"({"mesh": "a.obj"})");
  EXPECT_THROW(load_scene(dir.file("s.json")), ConfigError);
}

TEST(Scene, MissingTextureFileNamesThePath) {
  TempDir dir;
  write(dir.file("s.json"), R"({"mesh": {"primitive": "plane"}, "kd": "nope.png"})");
  auto msg = error_of([&] { load_scene(dir.file("s.json")); });
  EXPECT_NE(msg.find("nope.png"), std::string::npos) << msg;
}

TEST(Scene, SaveAssetWritesMipsOnlyForIndependentLevels) {
  TempDir dir;
  auto    plain = parse_scene(
      R"({"mesh": {"primitive": "plane"}, "kd": {"constant": [0.2, 0.4, 0.6, 1], "resolution": [8, 8]}})", ".");
  auto files = save_asset(plain, dir.file("plain"));
  EXPECT_FALSE(std::filesystem::exists(dir.file("plain/asset_kd_mip1.png")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("plain/asset_kd.png")));

  auto indep = parse_scene(
      R"({"mesh": {"primitive": "plane"}, "independent_levels": true,
          "kd": {"constant": [0.2, 0.4, 0.6, 1], "resolution": [8, 8]}})", ".");
  save_asset(indep, dir.file("indep"));
  EXPECT_TRUE(std::filesystem::exists(dir.file("indep/asset_kd_mip3.png")));

  write(dir.file("plain/scene.json"), R"({"mesh": "asset.obj"})");
  auto back = load_scene(dir.file("plain/scene.json"));
  auto kd   = tensor_image(back.params[back.kd.levels[0]]);
  EXPECT_NEAR(kd.at(3, 3, 1), 0.4, 1e-4);
  EXPECT_EQ(back.base_positions().size(), plain.base_positions().size());
}

// --- checkpoints -------------------------------------------------------------

TEST(Checkpoint, RoundtripPreservesStateAndTensors) {
  TempDir  dir;
  auto     a = parse_scene(R"({"mesh": {"primitive": "sphere", "segments": 6, "rings": 4}})", ".");
  FitState s;
  s.iteration                = 7;
  s.lambda_ready             = true;
  s.schedule.lambda0         = 0.3;
  s.schedule.lambda_current  = 0.29;
  s.schedule.iteration       = 7;
  s.adam.step                = 7;
  s.adam.m.assign(a.params.size(), {0.5, -1e-300});
  s.adam.v.assign(a.params.size(), {2.0});
  s.log.push_back({3, 0.1, 0.2, 0.3, 0.4, 0});
  write_checkpoint(make_checkpoint(a, s), dir.file("c.bin"));
  auto c = read_checkpoint(dir.file("c.bin"));
  EXPECT_EQ(c.state.iteration, 7u);
  EXPECT_EQ(c.state.schedule.lambda_current, 0.29);
  EXPECT_EQ(c.state.adam.m, s.adam.m);
  EXPECT_EQ(c.state.adam.v, s.adam.v);
  ASSERT_EQ(c.state.log.size(), 1u);
  EXPECT_EQ(c.state.log[0].lr, 0.4);
  ASSERT_EQ(c.tensors.size(), a.params.size());
  EXPECT_EQ(c.tensors[0].values, a.params.at(0).values);

  auto copy = a;
  copy.params.at(0).values.assign(copy.params.at(0).size(), 0.0);
  apply_checkpoint(c, copy);
  EXPECT_EQ(copy.params.at(0).values, a.params.at(0).values);
}

TEST(Checkpoint, ShapeMismatchAndBadVersionAreErrors) {
  TempDir dir;
  auto small = parse_scene(R"({"mesh": {"primitive": "sphere", "segments": 6, "rings": 4}})", ".");
  auto big   = parse_scene(R"({"mesh": {"primitive": "sphere", "segments": 8, "rings": 4}})", ".");
  write_checkpoint(make_checkpoint(small, {}), dir.file("c.bin"));
  auto c = read_checkpoint(dir.file("c.bin"));
  EXPECT_THROW(apply_checkpoint(c, big), Error);

  std::fstream f(dir.file("c.bin"), std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(8);
  std::uint32_t v = 99;
  f.write(reinterpret_cast<const char*>(&v), 4);
  f.close();
  auto msg = error_of([&] { read_checkpoint(dir.file("c.bin")); });
  EXPECT_NE(msg.find("version 99"), std::string::npos) << msg;
  write(dir.file("junk.bin"), "not a checkpoint");
  EXPECT_THROW(read_checkpoint(dir.file("junk.bin")), Error);
}
