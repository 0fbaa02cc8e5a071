#include "apfit/scene_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "apfit/error.hpp"
#include "apfit/shading.hpp"
#include "json.hpp"

namespace apfit {

namespace fs = std::filesystem;
using json   = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
    "binary formats are written in host order, which must be little-endian");

// --- files -------------------------------------------------------------------

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed: " + path);
}

namespace {

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base_dir) / path).lexically_normal().string();
}

std::string extension(const std::string& path) {
  auto e = fs::path(path).extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

// --- PFM ---------------------------------------------------------------------

Image read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::string magic;
  int         w = 0, h = 0;
  double      scale = 0;
  in >> magic >> w >> h >> scale;
  if (!in || (magic != "PF" && magic != "Pf") || w < 1 || h < 1 || scale == 0)
    throw Error(path + ": malformed PFM header");
  in.get();  // single whitespace before the raster
  int   c = magic == "PF" ? 3 : 1;
  Image img(w, h, c);
  std::vector<float> row(static_cast<std::size_t>(w) * c);
  bool               swap = scale > 0;  // positive scale = big-endian
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw Error(path + ": truncated PFM raster");
    for (std::size_t i = 0; i < row.size(); ++i) {
      auto bits = std::bit_cast<std::uint32_t>(row[i]);
      if (swap) bits = __builtin_bswap32(bits);
      img.data[static_cast<std::size_t>(y) * w * c + i] = std::bit_cast<float>(bits);
    }
  }
  return img;
}

void write_pfm(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw Error(path + ": PFM holds 1 or 3 channels, got " + std::to_string(img.channels));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = img.height - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = static_cast<float>(img.data[static_cast<std::size_t>(y) * row.size() + i]);
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw Error("write failed: " + path);
}

// --- PNG ---------------------------------------------------------------------

namespace {

struct PngFile {
  FILE* f = nullptr;
  ~PngFile() {
    if (f) std::fclose(f);
  }
};

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  *text      = msg;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

bool is_color_channel(int c, int channels) {
  return !((channels == 2 && c == 1) || (channels == 4 && c == 3));
}

}  // namespace

Image read_png(const std::string& path, bool srgb) {
  PngFile file;
  file.f = std::fopen(path.c_str(), "rb");
  if (!file.f) throw Error("cannot open " + path);
  std::string err;
  auto* png  = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler,
       png_warning_handler);
  auto* info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(path + ": libpng initialization failed");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(path + ": " + err);
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  auto depth = png_get_bit_depth(png, info);
  auto type  = png_get_color_type(png, info);
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  int  w        = static_cast<int>(png_get_image_width(png, info));
  int  h        = static_cast<int>(png_get_image_height(png, info));
  int  channels = png_get_channels(png, info);
  int  bits     = png_get_bit_depth(png, info);
  auto rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> raster(rowbytes * h);
  std::vector<png_bytep>     rows(h);
  for (int y = 0; y < h; ++y) rows[y] = raster.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (bits != 8 && bits != 16) throw Error(path + ": unsupported PNG bit depth");
  img = Image(w, h, channels);
  double maxval = bits == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        std::size_t i = static_cast<std::size_t>(x) * channels + c;
        double      v;
        if (bits == 16) {
          std::uint16_t s;
          std::memcpy(&s, rows[y] + 2 * i, 2);
          v = s / maxval;
        } else {
          v = rows[y][i] / maxval;
        }
        img.at(x, y, c) = srgb && is_color_channel(c, channels) ? srgb_decode(v) : v;
      }
  return img;
}

void write_png(const Image& img, const std::string& path, int bit_depth, bool srgb) {
  if (bit_depth != 8 && bit_depth != 16) throw Error(path + ": unsupported PNG bit depth");
  if (img.channels < 1 || img.channels > 4) throw Error(path + ": PNG holds 1 to 4 channels");
  static const int types[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA, PNG_COLOR_TYPE_RGB,
      PNG_COLOR_TYPE_RGB_ALPHA};
  int    bytes  = bit_depth / 8;
  double maxval = bit_depth == 16 ? 65535.0 : 255.0;
  std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels * bytes;
  std::vector<unsigned char> raster(rowbytes * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        auto v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        if (srgb && is_color_channel(c, img.channels)) v = srgb_encode(v);
        auto q = static_cast<unsigned>(std::lround(v * maxval));
        auto* p = raster.data() + y * rowbytes + (static_cast<std::size_t>(x) * img.channels + c) * bytes;
        if (bytes == 2) {
          p[0] = static_cast<unsigned char>(q >> 8);  // PNG is big-endian
          p[1] = static_cast<unsigned char>(q & 0xff);
        } else {
          p[0] = static_cast<unsigned char>(q);
        }
      }

  PngFile file;
  file.f = std::fopen(path.c_str(), "wb");
  if (!file.f) throw Error("cannot write " + path);
  std::string err;
  auto* png  = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_handler,
       png_warning_handler);
  auto* info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(path + ": libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(path + ": " + err);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, img.width, img.height, bit_depth, types[img.channels - 1],
      PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (srgb) png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) png_write_row(png, raster.data() + y * rowbytes);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_texture(const std::string& path, int channels, bool srgb) {
  if (!fs::exists(path)) throw Error("missing file " + path);
  auto  ext = extension(path);
  Image src;
  if (ext == ".pfm")
    src = read_pfm(path);
  else if (ext == ".png")
    src = read_png(path, srgb);
  else
    throw Error(path + ": unsupported image format (use .pfm or .png)");
  if (src.channels == channels) return src;
  Image out(src.width, src.height, channels);
  for (std::size_t p = 0; p < src.pixel_count(); ++p) {
    const double* s = &src.data[p * src.channels];
    double*       d = &out.data[p * channels];
    bool   gray     = src.channels <= 2;
    bool   alpha    = src.channels == 2 || src.channels == 4;
    for (int c = 0; c < channels; ++c) {
      if (c < 3)
        d[c] = gray ? s[0] : (c < src.channels ? s[c] : 0.0);
      else
        d[c] = alpha ? s[src.channels - 1] : 1.0;
    }
  }
  return out;
}

void save_texture(const Image& img, const std::string& path, bool srgb) {
  auto ext = extension(path);
  if (ext == ".pfm")
    write_pfm(img, path);
  else if (ext == ".png")
    write_png(img, path, 16, srgb);
  else
    throw Error(path + ": unsupported image format (use .pfm or .png)");
}

void write_preview_png(const Image& hdr, const std::string& path) {
  Image ldr(hdr.width, hdr.height, 3);
  for (std::size_t p = 0; p < hdr.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c)
      ldr.data[p * 3 + c] = tone_map(std::max(0.0, hdr.data[p * hdr.channels + std::min(c, hdr.channels - 1)]));
  write_png(ldr, path, 8, false);  // tone map already applies the sRGB curve
}

Image side_by_side(const std::vector<Image>& images) {
  if (images.empty()) return {};
  int w = 0;
  for (const auto& i : images) {
    if (i.height != images[0].height || i.channels != images[0].channels)
      throw std::invalid_argument("side_by_side: images differ in height or channels");
    w += i.width;
  }
  Image out(w, images[0].height, images[0].channels);
  int   x0 = 0;
  for (const auto& i : images) {
    for (int y = 0; y < i.height; ++y)
      for (int x = 0; x < i.width; ++x)
        for (int c = 0; c < i.channels; ++c) out.at(x0 + x, y, c) = i.at(x, y, c);
    x0 += i.width;
  }
  return out;
}

// --- OBJ ---------------------------------------------------------------------

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& msg) {
  throw Error(path + ":" + std::to_string(line) + ": " + msg);
}

// Last whitespace-separated token, so map options such as "-bm 1" are skipped.
std::string map_path(std::istringstream& ss) {
  std::string tok, last;
  while (ss >> tok) last = tok;
  return last;
}

std::vector<ObjMaterial> load_mtl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing file " + path);
  auto                     dir = fs::path(path).parent_path().string();
  std::vector<ObjMaterial> mats;
  std::string              line;
  int                      n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ss(line);
    std::string        key;
    if (!(ss >> key) || key[0] == '#') continue;
    if (key == "newmtl") {
      mats.emplace_back();
      ss >> mats.back().name;
      continue;
    }
    if (mats.empty()) parse_fail(path, n, "'" + key + "' before newmtl");
    auto& m = mats.back();
    if (key == "Kd") {
      if (!(ss >> m.kd.x >> m.kd.y >> m.kd.z)) parse_fail(path, n, "malformed Kd");
    } else if (key == "map_Kd") {
      m.map_kd = resolve(dir, map_path(ss));
    } else if (key == "map_Ks") {
      m.map_ks = resolve(dir, map_path(ss));
    } else if (key == "map_bump" || key == "bump" || key == "map_Bump") {
      m.map_bump = resolve(dir, map_path(ss));
    } else if (key == "map_d") {
      m.map_d = resolve(dir, map_path(ss));
    } else if (key == "disp") {
      m.disp = resolve(dir, map_path(ss));
    }
  }
  return mats;
}

// One "v/vt/vn" corner; vt is -1 when absent. Indices are 1-based, negative
// values count back from the end.
bool parse_corner(const std::string& tok, int nv, int nt, int& v, int& t) {
  auto fix = [](long i, int n) -> int { return i < 0 ? static_cast<int>(n + i) : static_cast<int>(i - 1); };
  char* end = nullptr;
  long  vi  = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || vi == 0) return false;
  v = fix(vi, nv);
  t = -1;
  if (*end == '/') {
    const char* s = end + 1;
    if (*s != '/' && *s != '\0') {
      long ti = std::strtol(s, &end, 10);
      if (end == s || ti == 0) return false;
      t = fix(ti, nt);
    } else {
      end = const_cast<char*>(s);
    }
    if (*end == '/') {
      ++end;
      std::strtol(end, &end, 10);
    }
  }
  return *end == '\0';
}

}  // namespace

ObjData load_obj(const std::string& path, bool allow_fan) {
  std::ifstream in(path);
  if (!in) throw Error("missing file " + path);
  auto                     dir = fs::path(path).parent_path().string();
  ObjData                  out;
  std::vector<ObjMaterial> mats;
  std::string              used;
  std::string              line;
  int                      n = 0;
  bool                     any_uv = false, any_missing_uv = false;
  std::vector<std::pair<int, Face>> uv_face_lines;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string        key;
    if (!(ss >> key) || key[0] == '#') continue;
    if (key == "v") {
      Vec3d p;
      if (!(ss >> p.x >> p.y >> p.z)) parse_fail(path, n, "malformed vertex");
      out.mesh.positions.push_back(p);
    } else if (key == "vt") {
      Vec2d t;
      if (!(ss >> t.x >> t.y)) parse_fail(path, n, "malformed texture coordinate");
      out.mesh.uvs.push_back(t);
    } else if (key == "vn") {
      // normals are recomputed from the geometry
    } else if (key == "f") {
      std::vector<int> vs, ts;
      std::string      tok;
      auto             nv = static_cast<int>(out.mesh.positions.size());
      auto             nt = static_cast<int>(out.mesh.uvs.size());
      while (ss >> tok) {
        int v, t;
        if (!parse_corner(tok, nv, nt, v, t)) parse_fail(path, n, "malformed face corner '" + tok + "'");
        if (v < 0 || v >= nv) parse_fail(path, n, "face index out of range");
        if (t >= nt || (t < 0 && tok.find('/') != std::string::npos && tok[tok.find('/') + 1] != '/'))
          parse_fail(path, n, "texture index out of range");
        vs.push_back(v);
        ts.push_back(t);
      }
      if (vs.size() < 3) parse_fail(path, n, "face with fewer than 3 corners");
      if (vs.size() > 4 && !allow_fan)
        parse_fail(path, n, std::to_string(vs.size()) + "-gon needs fan triangulation");
      bool has_t = std::all_of(ts.begin(), ts.end(), [](int t) { return t >= 0; });
      bool no_t  = std::all_of(ts.begin(), ts.end(), [](int t) { return t < 0; });
      if (!has_t && !no_t) parse_fail(path, n, "face mixes corners with and without uvs");
      any_uv         = any_uv || has_t;
      any_missing_uv = any_missing_uv || no_t;
      for (std::size_t k = 1; k + 1 < vs.size(); ++k) {
        out.mesh.faces.push_back({vs[0], vs[k], vs[k + 1]});
        out.mesh.uv_faces.push_back({ts[0], ts[k], ts[k + 1]});
      }
    } else if (key == "mtllib") {
      auto m = load_mtl(resolve(dir, map_path(ss)));
      mats.insert(mats.end(), m.begin(), m.end());
    } else if (key == "usemtl") {
      if (used.empty()) ss >> used;
    } else if (key == "o" || key == "g" || key == "s" || key == "l" || key == "p") {
      // grouping and smoothing are ignored
    } else {
      parse_fail(path, n, "unsupported statement '" + key + "'");
    }
  }
  if (any_uv && any_missing_uv) throw Error(path + ": some faces have uvs and some do not");
  if (!any_uv) out.mesh.uv_faces.clear();
  for (const auto& m : mats)
    if (m.name == used || used.empty()) {
      out.material     = m;
      out.has_material = true;
      break;
    }
  try {
    out.mesh.validate();
  } catch (const std::invalid_argument& e) {
    throw Error(path + ": " + e.what());
  }
  return out;
}

namespace {

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_obj(const Mesh& mesh, const std::string& path, const std::string& mtl_file,
    const std::string& material) {
  std::ostringstream o;
  if (!mtl_file.empty()) o << "mtllib " << mtl_file << "\n";
  for (const auto& p : mesh.positions) o << "v " << real(p.x) << " " << real(p.y) << " " << real(p.z) << "\n";
  for (const auto& t : mesh.uvs) o << "vt " << real(t.x) << " " << real(t.y) << "\n";
  if (!material.empty()) o << "usemtl " << material << "\n";
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    o << "f";
    for (int k = 0; k < 3; ++k) {
      o << " " << mesh.faces[f][k] + 1;
      if (mesh.has_uvs()) o << "/" << mesh.uv_faces[f][k] + 1;
    }
    o << "\n";
  }
  write_text_file(path, o.str());
}

std::vector<std::string> save_asset(const Asset& asset, const std::string& dir,
    const std::string& stem) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw Error("cannot create directory " + dir);
  std::vector<std::string> written;

  Mesh mesh      = asset.mesh;
  mesh.positions = asset.base_positions();
  auto obj       = (fs::path(dir) / (stem + ".obj")).string();
  save_obj(mesh, obj, stem + ".mtl", stem);
  written.push_back(obj);

  std::ostringstream mtl;
  mtl << "newmtl " << stem << "\n";
  struct Item {
    TextureKind kind;
    const char* key;
    const char* name;
    const char* ext;
    bool        srgb;
  };
  const Item items[] = {{TextureKind::kd, "map_Kd", "kd", ".png", true},
      {TextureKind::orm, "map_Ks", "orm", ".pfm", false},
      {TextureKind::normal, "map_bump", "normal", ".pfm", false}};
  for (const auto& it : items) {
    const auto& slot = asset.slot(it.kind);
    for (std::size_t l = 0; l < slot.levels.size(); ++l) {
      auto file = stem + "_" + it.name + (l ? "_mip" + std::to_string(l) : "") + it.ext;
      save_texture(tensor_image(asset.params[slot.levels[l]]), (fs::path(dir) / file).string(), it.srgb);
      written.push_back((fs::path(dir) / file).string());
      if (l == 0) mtl << it.key << " " << file << "\n";
    }
  }
  if (asset.has_displacement()) {
    auto file = stem + "_displacement.pfm";
    write_pfm(tensor_image(asset.params[asset.displacement]), (fs::path(dir) / file).string());
    written.push_back((fs::path(dir) / file).string());
    mtl << "disp " << file << "\n";
  }
  auto mtl_path = (fs::path(dir) / (stem + ".mtl")).string();
  write_text_file(mtl_path, mtl.str());
  written.push_back(mtl_path);
  return written;
}

// --- JSON helpers --------------------------------------------------------------

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

Mat4 mat4_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 16) throw ConfigError(what + " must be 16 numbers");
  Mat4 m;
  for (int i = 0; i < 16; ++i) {
    if (!j[i].is_number()) throw ConfigError(what + " must be 16 numbers");
    m.m[i] = j[i].get<double>();
  }
  return m;
}

Vec3d vec3_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number())
    throw ConfigError(what + " must be 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const Mat4& m) { return json(std::vector<double>(m.m.begin(), m.m.end())); }
json to_json(const Vec3d& v) { return json{v.x, v.y, v.z}; }

}  // namespace

// --- animation ---------------------------------------------------------------

BoneSet parse_animation(const std::string& text) {
  auto j = parse_json(text, "animation");
  if (!j.is_object() || !j.contains("bones") || !j.contains("frames"))
    throw ConfigError("animation needs 'bones' and 'frames'");
  BoneSet b;
  if (!j["bones"].is_number_integer() || j["bones"].get<int>() < 1)
    throw ConfigError("animation 'bones' must be a positive integer");
  b.bone_count = j["bones"].get<int>();
  if (!j["frames"].is_array()) throw ConfigError("animation 'frames' must be an array");
  for (std::size_t f = 0; f < j["frames"].size(); ++f) {
    const auto& fr = j["frames"][f];
    if (!fr.is_array() || static_cast<int>(fr.size()) != b.bone_count)
      throw ConfigError("frame " + std::to_string(f) + " is ragged: expected " +
                        std::to_string(b.bone_count) + " matrices");
    std::vector<Mat4> mats;
    for (std::size_t k = 0; k < fr.size(); ++k)
      mats.push_back(mat4_from(fr[k], "frame " + std::to_string(f) + " bone " + std::to_string(k)));
    b.frames.push_back(std::move(mats));
  }
  try {
    b.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("animation: ") + e.what());
  }
  return b;
}

BoneSet load_animation(const std::string& path) { return parse_animation(read_text_file(path)); }

std::string animation_json(const BoneSet& bones) {
  json frames = json::array();
  for (const auto& f : bones.frames) {
    json mats = json::array();
    for (const auto& m : f) mats.push_back(to_json(m));
    frames.push_back(mats);
  }
  return json{{"bones", bones.bone_count}, {"frames", frames}}.dump(1);
}

// --- views -------------------------------------------------------------------

Camera parse_camera(const std::string& text, int width, int height) {
  auto j = parse_json(text, "camera");
  if (!j.is_object()) throw ConfigError("camera must be an object");
  Camera c;
  c.width  = width;
  c.height = height;
  if (j.contains("view_matrix")) {
    c.view       = mat4_from(j["view_matrix"], "camera view_matrix");
    c.projection = mat4_from(j.value("proj_matrix", json()), "camera proj_matrix");
    return c;
  }
  for (const char* k : {"eye", "target"})
    if (!j.contains(k)) throw ConfigError(std::string("camera needs '") + k + "'");
  auto up   = j.contains("up") ? vec3_from(j["up"], "camera up") : Vec3d{0, 1, 0};
  auto fovy = j.value("fovy_deg", 45.0) * pi / 180;
  auto near = j.value("near", 0.1), far = j.value("far", 100.0);
  if (!(fovy > 0 && fovy < pi) || !(near > 0) || !(far > near))
    throw ConfigError("camera fovy / near / far out of range");
  return Camera::look_at(vec3_from(j["eye"], "camera eye"), vec3_from(j["target"], "camera target"),
      up, fovy, width, height, near, far);
}

PointLight parse_light(const std::string& text) {
  auto j = parse_json(text, "light");
  if (!j.is_object() || !j.contains("position")) throw ConfigError("light needs 'position'");
  PointLight l;
  l.position  = vec3_from(j["position"], "light position");
  l.intensity = j.contains("intensity") ? vec3_from(j["intensity"], "light intensity") : Vec3d{1, 1, 1};
  return l;
}

std::string camera_json(const Camera& c) {
  return json{{"view_matrix", to_json(c.view)}, {"proj_matrix", to_json(c.projection)}}.dump(1);
}

std::string light_json(const PointLight& l) {
  return json{{"position", to_json(l.position)}, {"intensity", to_json(l.intensity)}}.dump(1);
}

// --- scenes ------------------------------------------------------------------

namespace {

std::array<int, 2> resolution_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer() ||
      j[0].get<int>() < 1 || j[1].get<int>() < 1)
    throw ConfigError(what + " resolution must be two positive integers");
  return {j[0].get<int>(), j[1].get<int>()};
}

std::vector<double> values_from(const json& j, std::size_t n, const std::string& what) {
  if (!j.is_array() || j.size() != n) throw ConfigError(what + " must have " + std::to_string(n) + " values");
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) throw ConfigError(what + " must be numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

// A texture: a file path, {"file": path}, {"constant": [...], "resolution"},
// {"checker": {...}} or {"bumps": {...}}.
Image texture_from(const json& j, int channels, bool srgb, const std::string& base_dir,
    const std::string& what) {
  if (j.is_string()) return load_texture(resolve(base_dir, j.get<std::string>()), channels, srgb);
  if (!j.is_object()) throw ConfigError(what + " must be a path or an object");
  if (j.contains("file"))
    return load_texture(resolve(base_dir, j["file"].get<std::string>()), channels, srgb);
  if (j.contains("constant")) {
    auto  res = resolution_from(j.value("resolution", json{1, 1}), what);
    auto  v   = values_from(j["constant"], channels, what + " constant");
    Image img(res[0], res[1], channels);
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
      for (int c = 0; c < channels; ++c) img.data[p * channels + c] = v[c];
    return img;
  }
  if (j.contains("checker")) {
    const auto& c   = j["checker"];
    auto        res = resolution_from(c.value("resolution", json{64, 64}), what);
    int         sq  = c.value("squares", 8);
    if (sq < 1) throw ConfigError(what + " checker squares must be positive");
    auto a = values_from(c.value("colors", json::array())[0], channels, what + " checker color");
    auto b = values_from(c.value("colors", json::array())[1], channels, what + " checker color");
    Image img(res[0], res[1], channels);
    for (int y = 0; y < res[1]; ++y)
      for (int x = 0; x < res[0]; ++x) {
        bool odd = ((x * sq / res[0]) + (y * sq / res[1])) % 2;
        for (int k = 0; k < channels; ++k) img.at(x, y, k) = odd ? b[k] : a[k];
      }
    return img;
  }
  if (j.contains("bumps")) {
    if (channels != 1) throw ConfigError(what + ": bumps are a displacement pattern");
    const auto& c   = j["bumps"];
    auto        res = resolution_from(c.value("resolution", json{128, 64}), what);
    double      f   = c.value("frequency", 8.0);
    double      amp = c.value("amplitude", 0.05);
    Image       img(res[0], res[1], 1);
    for (int y = 0; y < res[1]; ++y)
      for (int x = 0; x < res[0]; ++x) {
        double u = (x + 0.5) / res[0], v = 1 - (y + 0.5) / res[1];
        img.at(x, y) = amp * std::sin(2 * pi * f * u) * std::sin(pi * f * v);
      }
    return img;
  }
  throw ConfigError(what + ": expected file, constant, checker or bumps");
}

Mesh mesh_from(const json& j, const std::string& base_dir, ObjData& obj) {
  if (j.is_string()) {
    obj = load_obj(resolve(base_dir, j.get<std::string>()));
    return obj.mesh;
  }
  if (!j.is_object() || !j.contains("primitive"))
    throw ConfigError("scene 'mesh' must be an OBJ path or {\"primitive\": ...}");
  auto kind = j["primitive"].get<std::string>();
  if (kind == "sphere")
    return make_uv_sphere(j.value("segments", 48), j.value("rings", 26), j.value("radius", 1.0));
  if (kind == "plane") return make_plane(j.value("cells", 1), j.value("half_extent", 1.0));
  if (kind == "box") return make_box(j.value("half_extent", 0.5));
  throw ConfigError("unknown primitive '" + kind + "'");
}

}  // namespace

Asset parse_scene(const std::string& text, const std::string& base_dir) {
  auto j = parse_json(text, "scene");
  if (!j.is_object() || !j.contains("mesh")) throw ConfigError("scene needs 'mesh'");
  static const std::vector<std::string> known{"mesh", "subdivision", "independent_levels", "kd",
      "orm", "normal", "displacement", "ambient", "animation", "skin_logits", "learn"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("scene: unknown key '" + it.key() + "'");

  std::map<std::string, bool> learn{{"positions", true}, {"skin_logits", false}, {"kd", true},
      {"orm", true}, {"normal_map", true}, {"displacement", false}, {"ambient", false}};
  if (j.contains("learn")) {
    if (!j["learn"].is_object()) throw ConfigError("scene 'learn' must be an object");
    for (auto it = j["learn"].begin(); it != j["learn"].end(); ++it) {
      if (!learn.count(it.key())) throw ConfigError("scene: unknown learnable '" + it.key() + "'");
      if (!it.value().is_boolean()) throw ConfigError("scene: learn flags must be booleans");
      learn[it.key()] = it.value().get<bool>();
    }
  }

  ObjData obj;
  Mesh    mesh;
  try {
    mesh = mesh_from(j["mesh"], base_dir, obj);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scene mesh: ") + e.what());
  }
  if (!mesh.has_uvs()) throw ConfigError("scene mesh has no texture coordinates");
  Asset a;
  try {
    a = make_asset(mesh, learn["positions"]);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scene mesh: ") + e.what());
  }
  a.independent_levels = j.value("independent_levels", false);
  a.subdivision        = j.value("subdivision", 0);
  if (a.subdivision < 0 || a.subdivision > 6) throw ConfigError("scene subdivision must be in [0, 6]");

  // Texture sources: scene entries first, then the OBJ material.
  auto kd_json = j.contains("kd") ? j["kd"] : json();
  if (kd_json.is_null() && obj.has_material) {
    if (!obj.material.map_kd.empty())
      kd_json = json(obj.material.map_kd);
    else
      kd_json = json{{"constant", {obj.material.kd.x, obj.material.kd.y, obj.material.kd.z, 1.0}}};
  }
  auto orm_json = j.contains("orm") ? j["orm"]
                                    : (obj.has_material && !obj.material.map_ks.empty()
                                              ? json(obj.material.map_ks)
                                              : json());
  auto nrm_json = j.contains("normal") ? j["normal"]
                                       : (obj.has_material && !obj.material.map_bump.empty()
                                                 ? json(obj.material.map_bump)
                                                 : json());
  auto disp_json = j.contains("displacement") ? j["displacement"]
                                              : (obj.has_material && !obj.material.disp.empty()
                                                        ? json(obj.material.disp)
                                                        : json());
  if (!kd_json.is_null()) {
    auto kd = texture_from(kd_json, 4, true, base_dir, "kd");
    if (!j.contains("kd") && obj.has_material && !obj.material.map_d.empty()) {
      auto alpha = load_texture(obj.material.map_d, 1, false);
      if (alpha.width != kd.width || alpha.height != kd.height)
        throw ConfigError("map_d size differs from map_Kd");
      for (std::size_t p = 0; p < kd.pixel_count(); ++p) kd.data[p * 4 + 3] = alpha.data[p];
    }
    set_texture(a, TextureKind::kd, kd, learn["kd"]);
  }
  if (!orm_json.is_null()) set_texture(a, TextureKind::orm, texture_from(orm_json, 3, false, base_dir, "orm"), learn["orm"]);
  if (!nrm_json.is_null())
    set_texture(a, TextureKind::normal, texture_from(nrm_json, 3, false, base_dir, "normal"),
        learn["normal_map"]);
  if (!disp_json.is_null())
    set_displacement(a, texture_from(disp_json, 1, false, base_dir, "displacement"), learn["displacement"]);
  if (j.contains("ambient")) set_ambient(a, vec3_from(j["ambient"], "scene ambient"), learn["ambient"]);

  if (j.contains("animation")) {
    auto bones = load_animation(resolve(base_dir, j["animation"].get<std::string>()));
    auto n     = a.mesh.positions.size() * static_cast<std::size_t>(bones.bone_count);
    std::vector<double> logits(n, 0.0);
    if (j.contains("skin_logits")) logits = values_from(j["skin_logits"], n, "scene skin_logits");
    set_skinning(a, std::move(bones), std::move(logits), learn["skin_logits"]);
  }
  try {
    finalize(a);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  // Textures left at their constant defaults stay frozen.
  const std::pair<TextureKind, bool> sources[] = {{TextureKind::kd, !kd_json.is_null()},
      {TextureKind::orm, !orm_json.is_null()}, {TextureKind::normal, !nrm_json.is_null()}};
  for (auto [kind, given] : sources)
    if (!given)
      for (auto id : a.slot(kind).levels) a.params[id].learnable = false;
  return a;
}

Asset load_scene(const std::string& path) {
  auto dir = fs::path(path).parent_path().string();
  return parse_scene(read_text_file(path), dir.empty() ? "." : dir);
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr char checkpoint_magic[8] = {'A', 'P', 'F', 'I', 'T', 'C', 'K', 'P'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    auto        n = count();
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  std::vector<double> doubles() {
    auto                n = count();
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
    check();
    return v;
  }

 private:
  std::uint64_t count() {
    auto n = pod<std::uint64_t>();
    if (n > (std::uint64_t{1} << 36)) throw Error(path_ + ": corrupt checkpoint");
    return n;
  }
  void check() {
    if (!in_) throw Error(path_ + ": truncated checkpoint");
  }
  std::istream& in_;
  std::string   path_;
};

}  // namespace

Checkpoint make_checkpoint(const Asset& asset, const FitState& state) {
  Checkpoint c;
  c.state = state;
  for (std::size_t i = 0; i < asset.params.size(); ++i) {
    ParamTensor t = asset.params.at(i);
    t.grad.clear();
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void write_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  Writer w(out);
  out.write(checkpoint_magic, sizeof checkpoint_magic);
  w.pod(checkpoint_version);

  const auto& s = c.state;
  w.pod(s.iteration);
  w.pod<std::uint8_t>(s.lambda_ready);
  for (double v : {s.schedule.lambda0, s.schedule.lambda_min, s.schedule.lambda_current,
           s.schedule.k_lambda, s.schedule.lr0, s.schedule.k_lr})
    w.pod(v);
  w.pod(s.schedule.iteration);

  w.pod(s.adam.beta1);
  w.pod(s.adam.beta2);
  w.pod(s.adam.epsilon);
  w.pod(s.adam.step);
  w.pod<std::uint64_t>(s.adam.m.size());
  for (std::size_t i = 0; i < s.adam.m.size(); ++i) {
    w.doubles(s.adam.m[i]);
    w.doubles(s.adam.v[i]);
  }

  w.pod<std::uint64_t>(s.log.size());
  for (const auto& r : s.log) {
    w.pod(r.iteration);
    for (double v : {r.image_loss, r.laplacian_loss, r.lambda, r.lr, r.wall_ms}) w.pod(v);
  }

  w.pod<std::uint64_t>(c.tensors.size());
  for (const auto& t : c.tensors) {
    w.str(t.name);
    w.pod<std::uint64_t>(t.shape.size());
    for (auto d : t.shape) w.pod<std::uint64_t>(d);
    w.pod<std::uint8_t>(t.learnable);
    w.doubles(t.values);
  }
  if (!out) throw Error("write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, checkpoint_magic, sizeof magic) != 0)
    throw Error(path + ": not a checkpoint file");
  Reader r(in, path);
  auto   version = r.pod<std::uint32_t>();
  if (version != checkpoint_version)
    throw Error(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                std::to_string(checkpoint_version));

  Checkpoint c;
  auto&      s = c.state;
  s.iteration    = r.pod<std::uint64_t>();
  s.lambda_ready = r.pod<std::uint8_t>() != 0;
  s.schedule.lambda0        = r.pod<double>();
  s.schedule.lambda_min     = r.pod<double>();
  s.schedule.lambda_current = r.pod<double>();
  s.schedule.k_lambda       = r.pod<double>();
  s.schedule.lr0            = r.pod<double>();
  s.schedule.k_lr           = r.pod<double>();
  s.schedule.iteration      = r.pod<std::uint64_t>();

  s.adam.beta1   = r.pod<double>();
  s.adam.beta2   = r.pod<double>();
  s.adam.epsilon = r.pod<double>();
  s.adam.step    = r.pod<std::uint64_t>();
  auto nm        = r.pod<std::uint64_t>();
  if (nm > 4096) throw Error(path + ": corrupt checkpoint");
  for (std::uint64_t i = 0; i < nm; ++i) {
    s.adam.m.push_back(r.doubles());
    s.adam.v.push_back(r.doubles());
  }

  auto nlog = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < nlog; ++i) {
    FitLogRow row;
    row.iteration      = r.pod<std::uint64_t>();
    row.image_loss     = r.pod<double>();
    row.laplacian_loss = r.pod<double>();
    row.lambda         = r.pod<double>();
    row.lr             = r.pod<double>();
    row.wall_ms        = r.pod<double>();
    s.log.push_back(row);
  }

  auto nt = r.pod<std::uint64_t>();
  if (nt > 4096) throw Error(path + ": corrupt checkpoint");
  for (std::uint64_t i = 0; i < nt; ++i) {
    ParamTensor t;
    t.name    = r.str();
    auto dims = r.pod<std::uint64_t>();
    if (dims > 8) throw Error(path + ": corrupt checkpoint");
    for (std::uint64_t d = 0; d < dims; ++d) t.shape.push_back(r.pod<std::uint64_t>());
    t.learnable = r.pod<std::uint8_t>() != 0;
    t.values    = r.doubles();
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void apply_checkpoint(const Checkpoint& c, Asset& asset) {
  if (c.tensors.size() != asset.params.size())
    throw Error("checkpoint has " + std::to_string(c.tensors.size()) + " tensors, asset has " +
                std::to_string(asset.params.size()));
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    const auto& src = c.tensors[i];
    auto&       dst = asset.params.at(i);
    if (src.name != dst.name || src.shape != dst.shape || src.values.size() != dst.values.size())
      throw Error("checkpoint tensor '" + src.name + "' does not match asset tensor '" + dst.name + "'");
  }
  if (!c.state.adam.m.empty() && c.state.adam.m.size() != asset.params.size())
    throw Error("checkpoint optimizer state does not match the asset");
  for (std::size_t i = 0; i < c.tensors.size(); ++i) asset.params.at(i).values = c.tensors[i].values;
}

}  // namespace apfit
