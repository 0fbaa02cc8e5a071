// The latent asset and the full differentiable forward render:
// subdivide -> displace -> skin -> normals / tangents -> project ->
// rasterize (depth peeling, MSAA) -> G-buffer -> texture lookups -> shade ->
// back-to-front compositing with silhouette antialiasing.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "apfit/adjoint.hpp"
#include "apfit/geometry.hpp"
#include "apfit/rasterizer.hpp"
#include "apfit/shading.hpp"
#include "apfit/texture.hpp"

namespace apfit {

enum class TextureKind { kd, orm, normal };

// Registry handles of one material texture: a single level-0 tensor, or one
// tensor per mip level when the levels are independent.
struct TextureSlot {
  std::vector<ParamId> levels;
  int                  channels = 0;
};

// Latent (or reference) asset: parameters in a registry plus fixed topology.
//
// Registry names: "positions" [V, 3], "skin_logits" [V, B], "kd" [H, W, 4],
// "orm" [H, W, 3], "normal" [H, W, 3] (level l > 0 of an independent pyramid
// is "<name>.mip<l>"), "displacement" [H, W, 1], "ambient" [3].
struct Asset {
  ParamRegistry params;
  Mesh          mesh;  // topology and uvs; positions live in the registry
  int           subdivision        = 0;
  bool          independent_levels = false;
  std::optional<BoneSet> bones;
  LaplacianMode laplacian_mode = LaplacianMode::relative;

  ParamId     positions, skin_logits, displacement, ambient;
  TextureSlot kd, orm, normal;

  // Derived by finalize().
  std::vector<SubdivisionPlan> plans;
  Mesh                         render_mesh;  // topology after subdivision
  EdgeTopology                 edges;
  Adjacency                    adjacency;        // base mesh
  std::vector<Vec2d>           tess_vertex_uvs;  // for displacement lookups
  bool                         finalized = false;

  const TextureSlot& slot(TextureKind kind) const;
  TextureSlot&       slot(TextureKind kind);

  std::vector<Vec3d> base_positions() const;
  void               set_base_positions(std::span<const Vec3d> p);
  TexturePyramid     pyramid(TextureKind kind) const;
  bool               has_displacement() const { return displacement.valid(); }
  Vec3d              ambient_color() const;
  bool               learnable(ParamId id) const { return id.valid() && params[id].learnable; }
};

// Creates an asset with a "positions" tensor. The mesh must have uvs.
Asset make_asset(Mesh mesh, bool learn_positions);
// Registers level 0 (and, with independent levels, its full mip chain).
void set_texture(Asset& asset, TextureKind kind, const Image& level0, bool learnable);
void set_displacement(Asset& asset, const Image& map, bool learnable);
void set_ambient(Asset& asset, const Vec3d& color, bool learnable);
void set_skinning(Asset& asset, BoneSet bones, std::vector<double> logits, bool learnable);
// Precomputes subdivision plans, edge topology and the differentials of the
// initial guess. Textures left unset get constant defaults.
void finalize(Asset& asset);

// Copies a texture's pyramid out of the asset (levels recomputed from level
// 0 unless independent).
Image tensor_image(const ParamTensor& t);
void  write_tensor(ParamTensor& t, const Image& img);

enum class AaMode { none, antialias, msaa };

struct RenderOptions {
  int      width  = 128;
  int      height = 128;
  AaMode   aa     = AaMode::antialias;
  int      msaa_samples = 4;
  int      peel_passes  = 1;
  Vec3d    background{0, 0, 0};
  WrapMode wrap          = WrapMode::clamp;
  bool     mip_filtering = false;  // trilinear lookups with analytic lod
};

struct View {
  Camera     camera;
  PointLight light;
  int        frame = -1;  // animation frame, -1 = rest pose
};

// Saved forward state for the backward pass.
struct RenderTape {
  RenderOptions options;
  View          view;

  std::vector<std::vector<Vec3d>> levels;  // base, then one per subdivision
  std::vector<Vec3d>              tess_normals;
  std::vector<Vec3d>              displaced;
  std::vector<Vec3d>              posed;
  std::vector<Vec3d>              normals;
  TangentFrame                    frame;
  Projected                       proj;
  TexturePyramid                  kd, orm, normal;
  Image                           displacement;
  Vec3d                           ambient;

  struct Layer {
    RasterOutput        raster;
    GBuffer             gbuffer;
    std::vector<Vec2d>  uv;
    std::vector<double> lod[3];  // per texture kind
    Image               rgba;      // alpha already scaled by MSAA coverage
    Image               accum_in;  // compositing input behind this layer
    Image               blended;   // before antialiasing
    AntialiasTrace      aa;
  };
  std::vector<Layer> layers;
  Image              color;  // W x H x 3 linear radiance
};

RenderTape render_forward(const Asset& asset, const View& view, const RenderOptions& options);
Image      render(const Asset& asset, const View& view, const RenderOptions& options);

// Accumulates d loss / d parameters into asset.params grads given
// d loss / d color. Stages whose parameters are all frozen are skipped.
void render_backward(Asset& asset, const RenderTape& tape, const Image& grad_color);

// Renders at S = s * s times the pixel count and box-filters down.
Image render_supersampled(const Asset& asset, const View& view,
    const RenderOptions& options, int supersample);

}  // namespace apfit
