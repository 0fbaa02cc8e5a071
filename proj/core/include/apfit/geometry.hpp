// Differentiable mesh operations applied before rasterization.
//
// Every forward operation has a *_backward companion that accumulates
// adjoints into caller-provided buffers.

#pragma once

#include <array>
#include <span>
#include <vector>

#include "apfit/math.hpp"
#include "apfit/texture.hpp"

namespace apfit {

using Face = std::array<int, 3>;

// Indexed triangle mesh. Positions and texture coordinates are indexed
// separately, as in OBJ files.
struct Mesh {
  std::vector<Vec3d> positions;
  std::vector<Face>  faces;
  std::vector<Vec2d> uvs;
  std::vector<Face>  uv_faces;  // empty, or one entry per face

  // Optional dense skinning logits, V x bone_count, row-major.
  int                 bone_count = 0;
  std::vector<double> skin_logits;

  // Uniform differentials of the initial guess, for the relative regularizer.
  std::vector<Vec3d> initial_differentials;

  std::size_t vertex_count() const { return positions.size(); }
  std::size_t face_count() const { return faces.size(); }
  bool        has_uvs() const { return !uv_faces.empty(); }

  // Throws std::invalid_argument on out-of-range indices or size mismatches.
  void validate() const;
};

// Per-frame bone matrices, frames[f][b].
struct BoneSet {
  int                            bone_count = 0;
  std::vector<std::vector<Mat4>> frames;

  std::size_t frame_count() const { return frames.size(); }
  void        validate() const;
};

// --- normals -----------------------------------------------------------------

// Area-weighted smooth normals. Vertices whose incident faces are all
// degenerate get (0, 0, 1).
std::vector<Vec3d> compute_vertex_normals(
    std::span<const Vec3d> positions, std::span<const Face> faces);
void compute_vertex_normals_backward(std::span<const Vec3d> positions,
    std::span<const Face> faces, std::span<const Vec3d> grad_normals,
    std::span<Vec3d> grad_positions);

// --- tangent frames ----------------------------------------------------------

struct TangentFrame {
  std::vector<Vec3d>  tangents;
  std::vector<Vec3d>  bitangents;
  std::vector<double> signs;  // uv handedness, +1 or -1
  std::vector<Vec3d>  tangent_sums;
  std::vector<char>   valid;  // false when no face contributed a tangent
};

TangentFrame compute_tangent_frame(const Mesh& mesh,
    std::span<const Vec3d> positions, std::span<const Vec3d> normals);
// The handedness sign is piecewise constant and carries no gradient.
void compute_tangent_frame_backward(const Mesh& mesh,
    std::span<const Vec3d> positions, std::span<const Vec3d> normals,
    const TangentFrame& frame, std::span<const Vec3d> grad_tangents,
    std::span<const Vec3d> grad_bitangents, std::span<Vec3d> grad_positions,
    std::span<Vec3d> grad_normals);

// --- uniform Laplacian -------------------------------------------------------

// One-ring neighbours over face edges, sorted and unique.
struct Adjacency {
  std::vector<std::vector<int>> neighbors;
};

Adjacency build_adjacency(std::size_t vertex_count, std::span<const Face> faces);

// delta_i = v_i - mean of the one ring. Isolated vertices get zero.
std::vector<Vec3d> uniform_laplacian(
    std::span<const Vec3d> positions, const Adjacency& adj);
void uniform_laplacian_backward(const Adjacency& adj,
    std::span<const Vec3d> grad_delta, std::span<Vec3d> grad_positions);

enum class LaplacianMode { relative, absolute };

// Mean squared deviation of the differentials from the reference ones
// (reference empty = absolute mode).
double laplacian_loss(std::span<const Vec3d> positions, const Adjacency& adj,
    std::span<const Vec3d> reference);
void   laplacian_loss_backward(std::span<const Vec3d> positions,
      const Adjacency& adj, std::span<const Vec3d> reference, double scale,
      std::span<Vec3d> grad_positions);

// Mesh-level convenience, throws when relative mode lacks stored differentials.
double laplacian_loss(const Mesh& mesh, LaplacianMode mode);

// --- skinning ----------------------------------------------------------------

// Row-wise softmax of V x B logits.
std::vector<double> skin_weights(std::span<const double> logits, int bones);

std::vector<Vec3d> skin(std::span<const Vec3d> positions,
    std::span<const double> logits, int bones, std::span<const Mat4> transforms);
void skin_backward(std::span<const Vec3d> positions,
    std::span<const double> logits, int bones, std::span<const Mat4> transforms,
    std::span<const Vec3d> grad_out, std::span<Vec3d> grad_positions,
    std::span<double> grad_logits);

std::vector<Vec3d> skin(const Mesh& mesh, const BoneSet& bones, int frame);

// --- subdivision -------------------------------------------------------------

// Edge-midpoint 1-to-4 subdivision topology, computed once.
struct SubdivisionPlan {
  std::size_t                     vertex_count = 0;  // input
  std::vector<std::array<int, 2>> edges;             // new vertex V + k = mid(edges[k])
  std::size_t                     uv_count = 0;
  std::vector<std::array<int, 2>> uv_edges;
  std::vector<Face>               faces;
  std::vector<Face>               uv_faces;
};

SubdivisionPlan plan_subdivision(const Mesh& mesh);
std::vector<Vec3d> subdivide_positions(
    const SubdivisionPlan& plan, std::span<const Vec3d> positions);
void subdivide_positions_backward(const SubdivisionPlan& plan,
    std::span<const Vec3d> grad_out, std::span<Vec3d> grad_positions);
// Topology, positions and uvs. Skin logits and differentials are dropped.
Mesh subdivide(const Mesh& mesh);
Mesh subdivide(const Mesh& mesh, const SubdivisionPlan& plan);

// --- displacement ------------------------------------------------------------

// One uv per position vertex (the first corner that references it).
std::vector<Vec2d> vertex_uvs(const Mesh& mesh);

// v + tex(uv) * n with a single-channel texture, bilinear at level 0.
std::vector<Vec3d> displace(std::span<const Vec3d> positions,
    std::span<const Vec3d> normals, std::span<const Vec2d> uvs,
    const Image& displacement, WrapMode wrap);
void displace_backward(std::span<const Vec3d> normals,
    std::span<const Vec2d> uvs, const Image& displacement, WrapMode wrap,
    std::span<const Vec3d> grad_out, std::span<Vec3d> grad_positions,
    std::span<Vec3d> grad_normals, Image* grad_displacement);

// --- primitives and helpers --------------------------------------------------

// Latitude/longitude sphere with 2 * segments * (rings - 1) triangles.
Mesh make_uv_sphere(int segments, int rings, double radius = 1.0);
// Square in the z = 0 plane spanning [-half, half]^2, normal +z.
Mesh make_plane(int cells, double half_extent = 1.0);
// Axis-aligned box [-h, h]^3, each face mapped to the full uv square.
Mesh make_box(double half_extent = 0.5);
Mesh make_tetrahedron();
Mesh make_icosahedron();

struct BoundingSphere {
  Vec3d  center;
  double radius = 0;
};
BoundingSphere bounding_sphere(std::span<const Vec3d> positions);

std::size_t edge_count(std::span<const Face> faces);

}  // namespace apfit
