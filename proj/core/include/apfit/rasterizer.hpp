// CPU rasterization primitives with adjoints: projection, coverage,
// barycentric interpolation, MSAA visibility, depth peeling and analytic
// silhouette antialiasing.
//
// Conventions: NDC x right, y up, depth in [-1, 1] with -1 at the near plane.
// Pixel (x, y) has its center at NDC (2(x + 0.5)/W - 1, 1 - 2(y + 0.5)/H).

#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "apfit/geometry.hpp"
#include "apfit/image.hpp"
#include "apfit/math.hpp"

namespace apfit {

struct Camera {
  Mat4 view;
  Mat4 projection;
  int  width  = 1;
  int  height = 1;

  static Camera look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up,
      double fovy, int width, int height, double near, double far);
  Vec3d position() const { return camera_position(view); }
  Mat4  view_projection() const { return projection * view; }
  void  validate() const;
};

struct Projected {
  std::vector<Vec4d> clip;
  std::vector<Vec3d> ndc;
  std::vector<char>  valid;  // false when clip.w is at or behind the eye
};

inline constexpr double clip_w_epsilon = 1e-6;

Projected project(std::span<const Vec3d> positions, const Mat4& view_projection);
void      project_backward(const Projected& proj, const Mat4& view_projection,
         std::span<const Vec3d> grad_ndc, std::span<Vec3d> grad_positions);

struct RasterOutput {
  int                 width = 0, height = 0;
  std::vector<int>    triangle_id;  // -1 = background
  std::vector<double> u, v;         // weights of vertices 0 and 1
  std::vector<double> depth;        // interpolated NDC depth, +inf on background
  std::vector<double> coverage;     // MSAA only: covered fraction
  // MSAA only: NDC point where the barycentrics were evaluated (pixel center,
  // or the centroid of covered samples when the center is not covered).
  std::vector<Vec2d> eval_point;

  std::size_t pixel_count() const { return triangle_id.size(); }
  Vec2d       pixel_center(std::size_t pixel) const;
  Vec2d       sample_point(std::size_t pixel) const;
  std::uint64_t fingerprint() const;
};

// Pixel-center coverage. Nearest depth strictly greater than
// min_depth_exclusive[pixel] wins (empty span = no lower bound); ties go to
// the lower triangle index. Shared edges are owned by exactly one triangle
// (top-left rule on the counter-clockwise-oriented triangle).
RasterOutput rasterize(const Projected& proj, std::span<const Face> faces,
    int width, int height, std::span<const double> min_depth_exclusive = {});

// Rotated/standard sample patterns for 1, 4, 8 and 16 samples, offsets in
// pixel units from the pixel center (x right, y down).
std::span<const Vec2d> msaa_pattern(int samples);

// Visibility at S sub-samples, barycentrics once per pixel. The pixel is
// owned by the triangle covering its center, else by the plurality of
// samples (ties to the lower index); coverage is that triangle's share.
RasterOutput msaa_rasterize(const Projected& proj, std::span<const Face> faces,
    int width, int height, int samples,
    std::span<const double> min_depth_exclusive = {});

// Front-to-back layers; layer p only accepts fragments strictly behind layer
// p-1 at the same pixel. Always returns `passes` layers.
std::vector<RasterOutput> depth_peel(const Projected& proj,
    std::span<const Face> faces, int width, int height, int passes,
    int msaa_samples = 1);

// Accumulates the adjoint of (u, v) at one pixel into grad_ndc.
void barycentric_backward(const Projected& proj, std::span<const Face> faces,
    const RasterOutput& raster, std::size_t pixel, double grad_u, double grad_v,
    std::span<Vec3d> grad_ndc);

// Per-pixel u a0 + v a1 + (1-u-v) a2 of a V x K attribute array.
Image interpolate(std::span<const double> attributes, int channels,
    std::span<const Face> faces, const RasterOutput& raster);
// Accumulates attribute adjoints and per-pixel barycentric adjoints.
void interpolate_backward(std::span<const double> attributes, int channels,
    std::span<const Face> faces, const RasterOutput& raster,
    const Image& grad_out, std::span<double> grad_attributes,
    std::span<double> grad_u, std::span<double> grad_v);

// Texture-space footprint of one pixel, for trilinear lookups.
double texture_lod(const Projected& proj, std::span<const Face> faces,
    std::span<const Vec2d> uvs, std::span<const Face> uv_faces,
    const RasterOutput& raster, std::size_t pixel, int tex_width,
    int tex_height);

// Edge adjacency of a triangle list, computed once per topology.
struct EdgeTopology {
  std::vector<std::array<int, 2>> edges;
  std::vector<std::vector<int>>   edge_faces;
  std::vector<std::array<int, 3>> face_edges;  // edge k joins corners k, k+1
};

EdgeTopology build_edge_topology(std::span<const Face> faces);

// Silhouette flags per edge for the current projection: boundary edges and
// edges whose incident faces disagree on facing.
std::vector<char> silhouette_edges(
    const EdgeTopology& topo, const Projected& proj, std::span<const Face> faces);

struct AntialiasTrace {
  struct Blend {
    std::size_t a = 0, b = 0;    // pixel indices, b is right of / below a
    int         v0 = 0, v1 = 0;  // silhouette edge vertices
    double      t  = 0;          // crossing position from a's center
    bool        vertical = false;
  };
  std::vector<Blend> horizontal, vertical;
  Image              after_horizontal;
};

// For each horizontally, then vertically, adjacent pixel pair with
// different triangle ids where a silhouette edge crosses the segment between
// the centers at t in [0, 1]: both pixels move to t*c_a + (1-t)*c_b.
// Deltas of one pass are computed from that pass's input.
Image antialias(const Image& color, const RasterOutput& raster,
    const Projected& proj, std::span<const Face> faces,
    const EdgeTopology& topo, AntialiasTrace* trace = nullptr);
void  antialias_backward(const Image& color, const RasterOutput& raster,
     const Projected& proj, const AntialiasTrace& trace, const Image& grad_out,
     Image& grad_color, std::span<Vec3d> grad_ndc);

}  // namespace apfit
