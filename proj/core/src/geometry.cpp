#include "apfit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "apfit/dual.hpp"

namespace apfit {

void Mesh::validate() const {
  auto V = static_cast<int>(positions.size());
  auto T = static_cast<int>(uvs.size());
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (auto i : faces[f])
      if (i < 0 || i >= V)
        throw std::invalid_argument(
            "face " + std::to_string(f) + " references missing vertex " + std::to_string(i));
  if (!uv_faces.empty() && uv_faces.size() != faces.size())
    throw std::invalid_argument("uv face count differs from face count");
  for (std::size_t f = 0; f < uv_faces.size(); ++f)
    for (auto i : uv_faces[f])
      if (i < 0 || i >= T)
        throw std::invalid_argument(
            "face " + std::to_string(f) + " references missing uv " + std::to_string(i));
  if (bone_count < 0 ||
      (bone_count > 0 && skin_logits.size() != positions.size() * bone_count))
    throw std::invalid_argument("skin logits do not match V x bones");
  if (!initial_differentials.empty() && initial_differentials.size() != positions.size())
    throw std::invalid_argument("initial differentials do not match V");
}

void BoneSet::validate() const {
  if (bone_count <= 0) throw std::invalid_argument("bone set has no bones");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (static_cast<int>(frames[f].size()) != bone_count)
      throw std::invalid_argument("frame " + std::to_string(f) + " has " +
                                  std::to_string(frames[f].size()) + " matrices, expected " +
                                  std::to_string(bone_count));
    for (std::size_t b = 0; b < frames[f].size(); ++b)
      if (!is_affine(frames[f][b]))
        throw std::invalid_argument("frame " + std::to_string(f) + " bone " +
                                    std::to_string(b) + " is not affine");
  }
}

// --- normals -----------------------------------------------------------------

namespace {

constexpr double tiny_length = 1e-30;

std::vector<Vec3d> normal_sums(
    std::span<const Vec3d> positions, std::span<const Face> faces) {
  std::vector<Vec3d> sums(positions.size());
  for (const auto& f : faces) {
    auto c = cross(positions[f[1]] - positions[f[0]], positions[f[2]] - positions[f[0]]);
    for (auto i : f) sums[i] += c;
  }
  return sums;
}

}  // namespace

std::vector<Vec3d> compute_vertex_normals(
    std::span<const Vec3d> positions, std::span<const Face> faces) {
  auto sums = normal_sums(positions, faces);
  for (auto& s : sums) {
    auto len = length(s);
    s        = len > tiny_length ? s / len : Vec3d{0, 0, 1};
  }
  return sums;
}

void compute_vertex_normals_backward(std::span<const Vec3d> positions,
    std::span<const Face> faces, std::span<const Vec3d> grad_normals,
    std::span<Vec3d> grad_positions) {
  auto sums = normal_sums(positions, faces);
  std::vector<Vec3d> grad_sums(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    auto len = length(sums[i]);
    if (len <= tiny_length) continue;
    auto n       = sums[i] / len;
    grad_sums[i] = (grad_normals[i] - n * dot(n, grad_normals[i])) / len;
  }
  for (const auto& f : faces) {
    auto g  = grad_sums[f[0]] + grad_sums[f[1]] + grad_sums[f[2]];
    auto e1 = positions[f[1]] - positions[f[0]];
    auto e2 = positions[f[2]] - positions[f[0]];
    auto g1 = cross(e2, g);
    auto g2 = cross(g, e1);
    grad_positions[f[1]] += g1;
    grad_positions[f[2]] += g2;
    grad_positions[f[0]] -= g1 + g2;
  }
}

// --- tangent frames ----------------------------------------------------------

namespace {

struct FaceTangent {
  Vec3d  tangent, bitangent;
  double inv_det = 0;
  double du1, dv1, du2, dv2;
  bool   valid = false;
};

FaceTangent face_tangent(const Mesh& mesh, std::span<const Vec3d> positions, std::size_t f) {
  const auto& pf = mesh.faces[f];
  const auto& tf = mesh.uv_faces[f];
  auto        e1 = positions[pf[1]] - positions[pf[0]];
  auto        e2 = positions[pf[2]] - positions[pf[0]];
  auto        d1 = mesh.uvs[tf[1]] - mesh.uvs[tf[0]];
  auto        d2 = mesh.uvs[tf[2]] - mesh.uvs[tf[0]];
  auto        det = d1.x * d2.y - d2.x * d1.y;
  FaceTangent r{{}, {}, 0, d1.x, d1.y, d2.x, d2.y, false};
  if (std::abs(det) < 1e-20) return r;
  r.inv_det   = 1 / det;
  r.tangent   = (e1 * d2.y - e2 * d1.y) * r.inv_det;
  r.bitangent = (e2 * d1.x - e1 * d2.x) * r.inv_det;
  r.valid     = true;
  return r;
}

template <typename T>
Vec3<T> any_orthogonal(const Vec3<T>& n) {
  auto a = std::abs(value_of(n.x)) < 0.9 ? Vec3<T>{T(1), T(0), T(0)} : Vec3<T>{T(0), T(1), T(0)};
  return normalize(a - n * dot(n, a));
}

template <typename T>
Vec3<T> orthonormal_tangent(const Vec3<T>& sum, const Vec3<T>& n) {
  return normalize(sum - n * dot(n, sum));
}

}  // namespace

TangentFrame compute_tangent_frame(const Mesh& mesh,
    std::span<const Vec3d> positions, std::span<const Vec3d> normals) {
  if (!mesh.has_uvs())
    throw std::invalid_argument("tangent frame requires texture coordinates");
  auto         V = positions.size();
  TangentFrame fr;
  fr.tangent_sums.assign(V, {});
  std::vector<Vec3d>  bsums(V);
  std::vector<double> magnitude(V, 0.0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    auto ft = face_tangent(mesh, positions, f);
    if (!ft.valid) continue;
    for (auto i : mesh.faces[f]) {
      fr.tangent_sums[i] += ft.tangent;
      bsums[i] += ft.bitangent;
      magnitude[i] += length(ft.tangent);
    }
  }
  fr.tangents.resize(V);
  fr.bitangents.resize(V);
  fr.signs.assign(V, 1.0);
  fr.valid.assign(V, 0);
  for (std::size_t i = 0; i < V; ++i) {
    const auto& n    = normals[i];
    auto        proj = fr.tangent_sums[i] - n * dot(n, fr.tangent_sums[i]);
    // sums that cancel (e.g. at a pole of a lat-long map) carry no direction
    if (length(proj) > 1e-9 * magnitude[i] && length(proj) > 1e-20) {
      fr.tangents[i] = proj / length(proj);
      fr.valid[i]    = 1;
    } else {
      fr.tangents[i] = any_orthogonal(n);
    }
    auto b        = cross(n, fr.tangents[i]);
    fr.signs[i]   = dot(b, bsums[i]) < 0 ? -1.0 : 1.0;
    fr.bitangents[i] = b * fr.signs[i];
  }
  return fr;
}

void compute_tangent_frame_backward(const Mesh& mesh,
    std::span<const Vec3d> positions, std::span<const Vec3d> normals,
    const TangentFrame& fr, std::span<const Vec3d> grad_tangents,
    std::span<const Vec3d> grad_bitangents, std::span<Vec3d> grad_positions,
    std::span<Vec3d> grad_normals) {
  using D = Dual<6>;
  auto V  = positions.size();
  std::vector<Vec3d> grad_sums(V);
  for (std::size_t i = 0; i < V; ++i) {
    Vec3<D> s{D::variable(fr.tangent_sums[i].x, 0), D::variable(fr.tangent_sums[i].y, 1),
        D::variable(fr.tangent_sums[i].z, 2)};
    Vec3<D> n{D::variable(normals[i].x, 3), D::variable(normals[i].y, 4),
        D::variable(normals[i].z, 5)};
    // the fallback tangent still follows the normal
    auto t = fr.valid[i] ? orthonormal_tangent(s, n) : any_orthogonal(n);
    auto b = cross(n, t) * D(fr.signs[i]);
    std::array<double, 6> g{};
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 6; ++l)
        g[l] += grad_tangents[i][k] * t[k].d[l] + grad_bitangents[i][k] * b[k].d[l];
    grad_sums[i] = {g[0], g[1], g[2]};
    grad_normals[i] += Vec3d{g[3], g[4], g[5]};
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    auto ft = face_tangent(mesh, positions, f);
    if (!ft.valid) continue;
    const auto& pf = mesh.faces[f];
    auto        g  = grad_sums[pf[0]] + grad_sums[pf[1]] + grad_sums[pf[2]];
    auto        g1 = g * (ft.dv2 * ft.inv_det);
    auto        g2 = g * (-ft.dv1 * ft.inv_det);
    grad_positions[pf[1]] += g1;
    grad_positions[pf[2]] += g2;
    grad_positions[pf[0]] -= g1 + g2;
  }
}

// --- uniform Laplacian -------------------------------------------------------

Adjacency build_adjacency(std::size_t vertex_count, std::span<const Face> faces) {
  Adjacency adj;
  adj.neighbors.resize(vertex_count);
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k) {
      auto a = f[k], b = f[(k + 1) % 3];
      if (a == b) continue;
      adj.neighbors[a].push_back(b);
      adj.neighbors[b].push_back(a);
    }
  }
  for (auto& n : adj.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return adj;
}

std::vector<Vec3d> uniform_laplacian(
    std::span<const Vec3d> positions, const Adjacency& adj) {
  std::vector<Vec3d> delta(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& nb = adj.neighbors[i];
    if (nb.empty()) continue;
    Vec3d sum{};
    for (auto j : nb) sum += positions[j];
    delta[i] = positions[i] - sum / static_cast<double>(nb.size());
  }
  return delta;
}

void uniform_laplacian_backward(const Adjacency& adj,
    std::span<const Vec3d> grad_delta, std::span<Vec3d> grad_positions) {
  for (std::size_t i = 0; i < adj.neighbors.size(); ++i) {
    const auto& nb = adj.neighbors[i];
    if (nb.empty()) continue;
    grad_positions[i] += grad_delta[i];
    auto share = grad_delta[i] / static_cast<double>(nb.size());
    for (auto j : nb) grad_positions[j] -= share;
  }
}

double laplacian_loss(std::span<const Vec3d> positions, const Adjacency& adj,
    std::span<const Vec3d> reference) {
  auto   delta = uniform_laplacian(positions, adj);
  double sum   = 0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    auto d = reference.empty() ? delta[i] : delta[i] - reference[i];
    sum += dot(d, d);
  }
  return delta.empty() ? 0.0 : sum / static_cast<double>(delta.size());
}

void laplacian_loss_backward(std::span<const Vec3d> positions,
    const Adjacency& adj, std::span<const Vec3d> reference, double scale,
    std::span<Vec3d> grad_positions) {
  if (positions.empty()) return;
  auto delta = uniform_laplacian(positions, adj);
  auto k     = 2 * scale / static_cast<double>(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i)
    delta[i] = (reference.empty() ? delta[i] : delta[i] - reference[i]) * k;
  uniform_laplacian_backward(adj, delta, grad_positions);
}

double laplacian_loss(const Mesh& mesh, LaplacianMode mode) {
  auto adj = build_adjacency(mesh.vertex_count(), mesh.faces);
  if (mode == LaplacianMode::relative) {
    if (mesh.initial_differentials.size() != mesh.vertex_count())
      throw std::invalid_argument(
          "relative Laplacian mode requires stored initial differentials");
    return laplacian_loss(mesh.positions, adj, mesh.initial_differentials);
  }
  return laplacian_loss(mesh.positions, adj, {});
}

// --- skinning ----------------------------------------------------------------

std::vector<double> skin_weights(std::span<const double> logits, int bones) {
  std::vector<double> w(logits.size());
  for (std::size_t row = 0; row * bones < logits.size(); ++row) {
    auto in  = logits.subspan(row * bones, bones);
    auto mx  = *std::max_element(in.begin(), in.end());
    double s = 0;
    for (int b = 0; b < bones; ++b) s += (w[row * bones + b] = std::exp(in[b] - mx));
    for (int b = 0; b < bones; ++b) w[row * bones + b] /= s;
  }
  return w;
}

std::vector<Vec3d> skin(std::span<const Vec3d> positions,
    std::span<const double> logits, int bones, std::span<const Mat4> transforms) {
  if (bones <= 0) throw std::invalid_argument("skinning requires at least one bone");
  auto               w = skin_weights(logits, bones);
  std::vector<Vec3d> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (int b = 0; b < bones; ++b)
      out[i] += transform_point(transforms[b], positions[i]) * w[i * bones + b];
  return out;
}

void skin_backward(std::span<const Vec3d> positions,
    std::span<const double> logits, int bones, std::span<const Mat4> transforms,
    std::span<const Vec3d> grad_out, std::span<Vec3d> grad_positions,
    std::span<double> grad_logits) {
  auto w = skin_weights(logits, bones);
  std::vector<double> gw(bones);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& g   = grad_out[i];
    double      avg = 0;
    for (int b = 0; b < bones; ++b) {
      const auto& M  = transforms[b];
      auto        wb = w[i * bones + b];
      grad_positions[i] += Vec3d{M(0, 0) * g.x + M(1, 0) * g.y + M(2, 0) * g.z,
                               M(0, 1) * g.x + M(1, 1) * g.y + M(2, 1) * g.z,
                               M(0, 2) * g.x + M(1, 2) * g.y + M(2, 2) * g.z} *
                           wb;
      gw[b] = dot(g, transform_point(M, positions[i]));
      avg += wb * gw[b];
    }
    if (grad_logits.empty()) continue;
    for (int b = 0; b < bones; ++b)
      grad_logits[i * bones + b] += w[i * bones + b] * (gw[b] - avg);
  }
}

std::vector<Vec3d> skin(const Mesh& mesh, const BoneSet& bones, int frame) {
  if (bones.bone_count <= 0) throw std::invalid_argument("skinning requires at least one bone");
  if (frame < 0 || static_cast<std::size_t>(frame) >= bones.frame_count())
    throw std::out_of_range("animation frame out of range");
  if (mesh.bone_count != bones.bone_count)
    throw std::invalid_argument("mesh skin logits do not match the bone set");
  return skin(mesh.positions, mesh.skin_logits, bones.bone_count, bones.frames[frame]);
}

// --- subdivision -------------------------------------------------------------

namespace {

void split_faces(std::span<const Face> faces, std::size_t base,
    std::vector<std::array<int, 2>>& edges, std::vector<Face>& out) {
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it  = mid.find(key);
    if (it != mid.end()) return it->second;
    auto idx = static_cast<int>(base + edges.size());
    edges.push_back({key.first, key.second});
    mid.emplace(key, idx);
    return idx;
  };
  out.reserve(faces.size() * 4);
  for (const auto& f : faces) {
    auto ab = midpoint(f[0], f[1]);
    auto bc = midpoint(f[1], f[2]);
    auto ca = midpoint(f[2], f[0]);
    out.push_back({f[0], ab, ca});
    out.push_back({ab, f[1], bc});
    out.push_back({ca, bc, f[2]});
    out.push_back({ab, bc, ca});
  }
}

}  // namespace

SubdivisionPlan plan_subdivision(const Mesh& mesh) {
  SubdivisionPlan plan;
  plan.vertex_count = mesh.positions.size();
  plan.uv_count     = mesh.uvs.size();
  split_faces(mesh.faces, plan.vertex_count, plan.edges, plan.faces);
  if (mesh.has_uvs()) split_faces(mesh.uv_faces, plan.uv_count, plan.uv_edges, plan.uv_faces);
  return plan;
}

std::vector<Vec3d> subdivide_positions(
    const SubdivisionPlan& plan, std::span<const Vec3d> positions) {
  std::vector<Vec3d> out(positions.begin(), positions.end());
  out.reserve(positions.size() + plan.edges.size());
  for (const auto& e : plan.edges) out.push_back((positions[e[0]] + positions[e[1]]) * 0.5);
  return out;
}

void subdivide_positions_backward(const SubdivisionPlan& plan,
    std::span<const Vec3d> grad_out, std::span<Vec3d> grad_positions) {
  for (std::size_t i = 0; i < plan.vertex_count; ++i) grad_positions[i] += grad_out[i];
  for (std::size_t k = 0; k < plan.edges.size(); ++k) {
    auto g = grad_out[plan.vertex_count + k] * 0.5;
    grad_positions[plan.edges[k][0]] += g;
    grad_positions[plan.edges[k][1]] += g;
  }
}

Mesh subdivide(const Mesh& mesh, const SubdivisionPlan& plan) {
  Mesh out;
  out.positions = subdivide_positions(plan, mesh.positions);
  out.faces     = plan.faces;
  out.uvs       = mesh.uvs;
  for (const auto& e : plan.uv_edges) out.uvs.push_back((mesh.uvs[e[0]] + mesh.uvs[e[1]]) * 0.5);
  out.uv_faces = plan.uv_faces;
  return out;
}

Mesh subdivide(const Mesh& mesh) { return subdivide(mesh, plan_subdivision(mesh)); }

// --- displacement ------------------------------------------------------------

std::vector<Vec2d> vertex_uvs(const Mesh& mesh) {
  std::vector<Vec2d> out(mesh.positions.size());
  std::vector<char>  set(mesh.positions.size(), 0);
  if (!mesh.has_uvs()) return out;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    for (int k = 0; k < 3; ++k) {
      auto v = mesh.faces[f][k];
      if (set[v]) continue;
      set[v] = 1;
      out[v] = mesh.uvs[mesh.uv_faces[f][k]];
    }
  return out;
}

std::vector<Vec3d> displace(std::span<const Vec3d> positions,
    std::span<const Vec3d> normals, std::span<const Vec2d> uvs,
    const Image& displacement, WrapMode wrap) {
  std::vector<Vec3d> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    double d = 0;
    sample_bilinear(displacement, uvs[i], wrap, std::span<double>(&d, 1));
    out[i] = positions[i] + normals[i] * d;
  }
  return out;
}

void displace_backward(std::span<const Vec3d> normals,
    std::span<const Vec2d> uvs, const Image& displacement, WrapMode wrap,
    std::span<const Vec3d> grad_out, std::span<Vec3d> grad_positions,
    std::span<Vec3d> grad_normals, Image* grad_displacement) {
  for (std::size_t i = 0; i < normals.size(); ++i) {
    double d = 0;
    sample_bilinear(displacement, uvs[i], wrap, std::span<double>(&d, 1));
    grad_positions[i] += grad_out[i];
    if (!grad_normals.empty()) grad_normals[i] += grad_out[i] * d;
    auto gd = dot(grad_out[i], normals[i]);
    // uvs are fixed: the uv adjoint is discarded
    sample_bilinear_backward(
        displacement, uvs[i], wrap, std::span<const double>(&gd, 1), grad_displacement);
  }
}

// --- primitives --------------------------------------------------------------

Mesh make_uv_sphere(int segments, int rings, double radius) {
  if (segments < 3 || rings < 2) throw std::invalid_argument("sphere too coarse");
  Mesh m;
  // poles are 0 (top) and 1 (bottom); ring r in [1, rings) has segments vertices
  m.positions.push_back({0, radius, 0});
  m.positions.push_back({0, -radius, 0});
  auto ring_vertex = [&](int r, int s) { return 2 + (r - 1) * segments + (s % segments); };
  for (int r = 1; r < rings; ++r) {
    auto theta = pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      auto phi = 2 * pi * s / segments;
      m.positions.push_back({radius * std::sin(theta) * std::cos(phi),
          radius * std::cos(theta), -radius * std::sin(theta) * std::sin(phi)});
    }
  }
  // uv grid (segments + 1) x (rings + 1), seam duplicated
  auto uv_index = [&](int r, int s) { return r * (segments + 1) + s; };
  for (int r = 0; r <= rings; ++r)
    for (int s = 0; s <= segments; ++s)
      m.uvs.push_back({static_cast<double>(s) / segments, 1.0 - static_cast<double>(r) / rings});
  for (int s = 0; s < segments; ++s) {
    // top cap
    m.faces.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
    m.uv_faces.push_back({uv_index(0, s), uv_index(1, s), uv_index(1, s + 1)});
    for (int r = 1; r < rings - 1; ++r) {
      auto a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
      auto c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
      m.faces.push_back({a, c, d});
      m.uv_faces.push_back({uv_index(r, s), uv_index(r + 1, s), uv_index(r + 1, s + 1)});
      m.faces.push_back({a, d, b});
      m.uv_faces.push_back({uv_index(r, s), uv_index(r + 1, s + 1), uv_index(r, s + 1)});
    }
    // bottom cap
    m.faces.push_back({ring_vertex(rings - 1, s), 1, ring_vertex(rings - 1, s + 1)});
    m.uv_faces.push_back({uv_index(rings - 1, s), uv_index(rings, s), uv_index(rings - 1, s + 1)});
  }
  return m;
}

Mesh make_plane(int cells, double h) {
  if (cells < 1) throw std::invalid_argument("plane needs at least one cell");
  Mesh m;
  for (int j = 0; j <= cells; ++j)
    for (int i = 0; i <= cells; ++i) {
      auto u = static_cast<double>(i) / cells, v = static_cast<double>(j) / cells;
      m.positions.push_back({-h + 2 * h * u, -h + 2 * h * v, 0});
      m.uvs.push_back({u, v});
    }
  auto idx = [&](int i, int j) { return j * (cells + 1) + i; };
  for (int j = 0; j < cells; ++j)
    for (int i = 0; i < cells; ++i) {
      Face a{idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)};
      Face b{idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)};
      m.faces.push_back(a);
      m.faces.push_back(b);
      m.uv_faces.push_back(a);
      m.uv_faces.push_back(b);
    }
  return m;
}

Mesh make_box(double h) {
  Mesh m;
  for (int i = 0; i < 8; ++i)
    m.positions.push_back({i & 1 ? h : -h, i & 2 ? h : -h, i & 4 ? h : -h});
  m.uvs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  // quads listed counter-clockwise seen from outside
  const int quads[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 6, 7, 3},
      {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.uv_faces.push_back({0, 1, 2});
    m.faces.push_back({q[0], q[2], q[3]});
    m.uv_faces.push_back({0, 2, 3});
  }
  return m;
}

Mesh make_tetrahedron() {
  Mesh m;
  m.positions = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  m.faces     = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return m;
}

Mesh make_icosahedron() {
  Mesh m;
  auto t      = (1 + std::sqrt(5.0)) / 2;
  m.positions = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
      {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  return m;
}

BoundingSphere bounding_sphere(std::span<const Vec3d> positions) {
  if (positions.empty()) return {};
  Vec3d lo = positions[0], hi = positions[0];
  for (const auto& p : positions)
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  BoundingSphere s{(lo + hi) * 0.5, 0};
  for (const auto& p : positions) s.radius = std::max(s.radius, length(p - s.center));
  return s;
}

std::size_t edge_count(std::span<const Face> faces) {
  std::vector<std::pair<int, int>> e;
  e.reserve(faces.size() * 3);
  for (const auto& f : faces)
    for (int k = 0; k < 3; ++k) e.push_back(std::minmax(f[k], f[(k + 1) % 3]));
  std::sort(e.begin(), e.end());
  return static_cast<std::size_t>(std::unique(e.begin(), e.end()) - e.begin());
}

}  // namespace apfit
