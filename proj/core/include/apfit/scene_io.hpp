// Asset and configuration I/O: OBJ / MTL meshes, PFM and PNG textures,
// animation and scene JSON, view descriptions and binary checkpoints.

#pragma once

#include <string>
#include <vector>

#include "apfit/geometry.hpp"
#include "apfit/image.hpp"
#include "apfit/optimize.hpp"
#include "apfit/render.hpp"

namespace apfit {

// --- images ------------------------------------------------------------------

// PFM: 1 or 3 channels of 32-bit floats, little-endian, rows bottom-up.
Image read_pfm(const std::string& path);
void  write_pfm(const Image& img, const std::string& path);

// PNG: 8- or 16-bit gray, gray+alpha, RGB or RGBA. With srgb, color
// channels are decoded to / encoded from linear (alpha never is).
Image read_png(const std::string& path, bool srgb);
void  write_png(const Image& img, const std::string& path, int bit_depth, bool srgb);

// Dispatches on the extension (.pfm or .png) and converts to `channels`
// (gray is replicated, a missing alpha is 1, extra channels are dropped).
Image load_texture(const std::string& path, int channels, bool srgb);
void  save_texture(const Image& img, const std::string& path, bool srgb);

// Tone-mapped sRGB 8-bit preview of an HDR image.
void write_preview_png(const Image& hdr, const std::string& path);
// Images of equal height side by side.
Image side_by_side(const std::vector<Image>& images);

// --- OBJ ---------------------------------------------------------------------

struct ObjMaterial {
  std::string name;
  Vec3d       kd{0.8, 0.8, 0.8};
  std::string map_kd, map_ks, map_bump, map_d, disp;  // resolved paths
};

struct ObjData {
  Mesh        mesh;
  ObjMaterial material;  // the first material used, if any
  bool        has_material = false;
};

// v / vt / vn / f (triangles; quads fan-triangulated; larger polygons only
// with allow_fan), mtllib / usemtl. Throws Error with path and line number.
ObjData load_obj(const std::string& path, bool allow_fan = false);
void    save_obj(const Mesh& mesh, const std::string& path, const std::string& mtl_file = "",
       const std::string& material = "");

// Writes <stem>.obj, <stem>.mtl and the material textures into dir: kd as
// 16-bit sRGB PNG, orm / normal / displacement as PFM. Mip levels above 0
// are written only for independent pyramids. Returns the written paths.
std::vector<std::string> save_asset(const Asset& asset, const std::string& dir,
    const std::string& stem = "asset");

// --- animation ---------------------------------------------------------------

// {"bones": B, "frames": [[16 reals row-major] x B] x N}
BoneSet     parse_animation(const std::string& json_text);
BoneSet     load_animation(const std::string& path);
std::string animation_json(const BoneSet& bones);

// --- scenes ------------------------------------------------------------------

// Builds and finalizes an asset from a scene JSON file (format in README).
Asset load_scene(const std::string& path);
Asset parse_scene(const std::string& json_text, const std::string& base_dir);

// Camera: {"eye", "target", "up", "fovy_deg", "near", "far"} or
// {"view_matrix", "proj_matrix"}; light: {"position", "intensity"}.
Camera      parse_camera(const std::string& json_text, int width, int height);
PointLight  parse_light(const std::string& json_text);
std::string camera_json(const Camera& camera);
std::string light_json(const PointLight& light);

// --- checkpoints -------------------------------------------------------------

inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
  FitState                 state;
  std::vector<ParamTensor> tensors;  // values only, in registry order
};

Checkpoint make_checkpoint(const Asset& asset, const FitState& state);
void       write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);
// Copies the tensor values into the asset; throws Error when names or
// shapes differ.
void apply_checkpoint(const Checkpoint& ckpt, Asset& asset);

// Reads a whole file; throws Error naming the path.
std::string read_text_file(const std::string& path);
void        write_text_file(const std::string& path, const std::string& text);

}  // namespace apfit
