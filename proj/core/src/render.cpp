#include "apfit/render.hpp"

#include <algorithm>
#include <stdexcept>

#include "apfit/error.hpp"

namespace apfit {

namespace {

const char* texture_name(TextureKind kind) {
  switch (kind) {
    case TextureKind::kd: return "kd";
    case TextureKind::orm: return "orm";
    case TextureKind::normal: return "normal";
  }
  return "";
}

int texture_channels(TextureKind kind) { return kind == TextureKind::kd ? 4 : 3; }

std::span<const Vec3d> as_vec3(const std::vector<double>& flat) {
  return {reinterpret_cast<const Vec3d*>(flat.data()), flat.size() / 3};
}

std::span<Vec3d> as_vec3(std::vector<double>& flat) {
  return {reinterpret_cast<Vec3d*>(flat.data()), flat.size() / 3};
}

void add_image(std::vector<double>& dst, const Image& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src.data[i];
}

}  // namespace

static_assert(sizeof(Vec3d) == 3 * sizeof(double));

const TextureSlot& Asset::slot(TextureKind kind) const {
  switch (kind) {
    case TextureKind::kd: return kd;
    case TextureKind::orm: return orm;
    default: return normal;
  }
}

TextureSlot& Asset::slot(TextureKind kind) {
  return const_cast<TextureSlot&>(static_cast<const Asset*>(this)->slot(kind));
}

std::vector<Vec3d> Asset::base_positions() const {
  auto p = as_vec3(params[positions].values);
  return {p.begin(), p.end()};
}

void Asset::set_base_positions(std::span<const Vec3d> p) {
  auto& t = params[positions];
  if (p.size() * 3 != t.values.size())
    throw std::invalid_argument("set_base_positions: vertex count differs");
  std::copy(p.begin(), p.end(), as_vec3(t.values).begin());
}

Image tensor_image(const ParamTensor& t) {
  if (t.shape.size() != 3) throw std::invalid_argument(t.name + " is not an image tensor");
  Image img(static_cast<int>(t.shape[1]), static_cast<int>(t.shape[0]),
      static_cast<int>(t.shape[2]));
  img.data = t.values;
  return img;
}

void write_tensor(ParamTensor& t, const Image& img) {
  if (img.data.size() != t.values.size())
    throw std::invalid_argument("write_tensor: size mismatch for " + t.name);
  t.values = img.data;
}

TexturePyramid Asset::pyramid(TextureKind kind) const {
  const auto& s = slot(kind);
  if (s.levels.empty()) throw std::logic_error("asset texture is not set");
  if (!independent_levels) return make_pyramid(tensor_image(params[s.levels[0]]), false);
  TexturePyramid p;
  p.independent_levels = true;
  for (const auto& id : s.levels) p.levels.push_back(tensor_image(params[id]));
  return p;
}

Vec3d Asset::ambient_color() const {
  if (!ambient.valid()) return {0, 0, 0};
  const auto& v = params[ambient].values;
  return {v[0], v[1], v[2]};
}

Asset make_asset(Mesh mesh, bool learn_positions) {
  mesh.validate();
  if (!mesh.has_uvs()) throw std::invalid_argument("asset mesh needs texture coordinates");
  Asset a;
  std::vector<double> flat;
  flat.reserve(mesh.positions.size() * 3);
  for (const auto& p : mesh.positions) flat.insert(flat.end(), {p.x, p.y, p.z});
  a.positions = a.params.register_param(
      "positions", {mesh.positions.size(), 3}, Initializer::from(std::move(flat)), learn_positions);
  a.mesh = std::move(mesh);
  return a;
}

void set_texture(Asset& asset, TextureKind kind, const Image& level0, bool learnable) {
  auto channels = texture_channels(kind);
  if (level0.channels != channels || level0.width < 1 || level0.height < 1)
    throw std::invalid_argument(std::string(texture_name(kind)) + " texture needs " +
                                std::to_string(channels) + " channels");
  auto& s = asset.slot(kind);
  if (!s.levels.empty()) throw std::logic_error("texture already set");
  s.channels = channels;
  auto pyr   = make_pyramid(level0, false, asset.independent_levels ? 0 : 1);
  for (int l = 0; l < pyr.level_count(); ++l) {
    const auto& img  = pyr.levels[l];
    auto        name = std::string(texture_name(kind));
    if (l > 0) name += ".mip" + std::to_string(l);
    s.levels.push_back(asset.params.register_param(name,
        {static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width),
            static_cast<std::size_t>(channels)},
        Initializer::from(img.data), learnable));
  }
  asset.finalized = false;
}

void set_displacement(Asset& asset, const Image& map, bool learnable) {
  if (map.channels != 1 || map.width < 1 || map.height < 1)
    throw std::invalid_argument("displacement map needs one channel");
  if (asset.displacement.valid()) throw std::logic_error("displacement already set");
  asset.displacement = asset.params.register_param("displacement",
      {static_cast<std::size_t>(map.height), static_cast<std::size_t>(map.width), 1},
      Initializer::from(map.data), learnable);
}

void set_ambient(Asset& asset, const Vec3d& color, bool learnable) {
  if (asset.ambient.valid()) throw std::logic_error("ambient already set");
  asset.ambient = asset.params.register_param(
      "ambient", {3}, Initializer::from({color.x, color.y, color.z}), learnable);
}

void set_skinning(Asset& asset, BoneSet bones, std::vector<double> logits, bool learnable) {
  bones.validate();
  auto v = asset.mesh.positions.size();
  if (logits.size() != v * static_cast<std::size_t>(bones.bone_count))
    throw std::invalid_argument("skin logits must be V x B");
  if (asset.skin_logits.valid()) throw std::logic_error("skinning already set");
  asset.skin_logits = asset.params.register_param("skin_logits",
      {v, static_cast<std::size_t>(bones.bone_count)}, Initializer::from(std::move(logits)),
      learnable);
  asset.bones = std::move(bones);
}

void finalize(Asset& asset) {
  if (asset.subdivision < 0) throw std::invalid_argument("subdivision level must be >= 0");
  if (asset.subdivision > 0 && asset.bones)
    throw std::invalid_argument("skinning cannot be combined with subdivision");
  if (asset.kd.levels.empty()) set_texture(asset, TextureKind::kd, Image(1, 1, 4, 1.0), false);
  if (asset.orm.levels.empty()) {
    Image orm(1, 1, 3);
    orm.data = {0.0, 0.5, 0.0};
    set_texture(asset, TextureKind::orm, orm, false);
  }
  if (asset.normal.levels.empty()) {
    Image n(1, 1, 3);
    n.data = {0.5, 0.5, 1.0};
    set_texture(asset, TextureKind::normal, n, false);
  }

  auto base = asset.base_positions();
  asset.mesh.positions = base;
  asset.adjacency      = build_adjacency(base.size(), asset.mesh.faces);
  if (asset.mesh.initial_differentials.empty())
    asset.mesh.initial_differentials = uniform_laplacian(base, asset.adjacency);

  asset.plans.clear();
  Mesh current = asset.mesh;
  for (int l = 0; l < asset.subdivision; ++l) {
    asset.plans.push_back(plan_subdivision(current));
    current = subdivide(current, asset.plans.back());
  }
  asset.render_mesh = current;
  asset.edges       = build_edge_topology(current.faces);
  if (asset.has_displacement()) asset.tess_vertex_uvs = vertex_uvs(current);
  asset.finalized = true;
}

// --- forward -----------------------------------------------------------------

namespace {

void check_options(const RenderOptions& o) {
  if (o.width < 1 || o.height < 1) throw std::invalid_argument("render size must be positive");
  if (o.peel_passes < 1) throw std::invalid_argument("peel passes must be >= 1");
  if (o.aa == AaMode::msaa) msaa_pattern(o.msaa_samples);  // validates the count
}

// Interpolated surface records and texture lookups of one layer.
void fill_gbuffer(const Asset& asset, RenderTape& tape, RenderTape::Layer& layer) {
  const auto& faces    = asset.render_mesh.faces;
  const auto& uv_faces = asset.render_mesh.uv_faces;
  const auto& uvs      = asset.render_mesh.uvs;
  const auto& r        = layer.raster;
  auto        n        = r.pixel_count();

  auto flat = [](const std::vector<Vec3d>& v) {
    return std::span<const double>(reinterpret_cast<const double*>(v.data()), v.size() * 3);
  };
  auto pos = interpolate(flat(tape.posed), 3, faces, r);
  auto nrm = interpolate(flat(tape.normals), 3, faces, r);
  auto tan = interpolate(flat(tape.frame.tangents), 3, faces, r);
  auto bit = interpolate(flat(tape.frame.bitangents), 3, faces, r);
  auto uvi = interpolate(std::span<const double>(reinterpret_cast<const double*>(uvs.data()),
                             uvs.size() * 2),
      2, uv_faces, r);

  layer.gbuffer.width  = r.width;
  layer.gbuffer.height = r.height;
  layer.gbuffer.mask.assign(n, 0);
  layer.gbuffer.points.assign(n, {});
  layer.uv.assign(n, {});
  const TexturePyramid* pyrs[3] = {&tape.kd, &tape.orm, &tape.normal};
  for (auto& l : layer.lod) l.assign(n, -1.0);

  for (std::size_t p = 0; p < n; ++p) {
    if (r.triangle_id[p] < 0) continue;
    layer.gbuffer.mask[p] = 1;
    auto& s               = layer.gbuffer.points[p];
    for (int c = 0; c < 3; ++c) {
      s.position[c]  = pos.data[p * 3 + c];
      s.normal[c]    = nrm.data[p * 3 + c];
      s.tangent[c]   = tan.data[p * 3 + c];
      s.bitangent[c] = bit.data[p * 3 + c];
    }
    Vec2d uv{uvi.data[p * 2], uvi.data[p * 2 + 1]};
    layer.uv[p] = uv;
    double buf[4];
    for (int k = 0; k < 3; ++k) {
      const auto& pyr = *pyrs[k];
      if (tape.options.mip_filtering)
        layer.lod[k][p] = texture_lod(tape.proj, faces, uvs, uv_faces, r, p,
            pyr.levels[0].width, pyr.levels[0].height);
      texture_sample(pyr, uv, layer.lod[k][p], tape.options.wrap,
          std::span<double>(buf, pyr.channels()));
      if (k == 0)
        for (int c = 0; c < 4; ++c) s.kd[c] = buf[c];
      else if (k == 1)
        for (int c = 0; c < 3; ++c) s.orm[c] = buf[c];
      else
        s.normal_map = {buf[0], buf[1], buf[2]};
    }
  }
}

}  // namespace

RenderTape render_forward(const Asset& asset, const View& view, const RenderOptions& options) {
  if (!asset.finalized) throw std::logic_error("render: asset is not finalized");
  check_options(options);
  view.camera.validate();

  RenderTape tape;
  tape.options = options;
  tape.view    = view;

  tape.levels.push_back(asset.base_positions());
  for (const auto& plan : asset.plans)
    tape.levels.push_back(subdivide_positions(plan, tape.levels.back()));
  const auto& tess  = tape.levels.back();
  const auto& faces = asset.render_mesh.faces;

  if (asset.has_displacement()) {
    tape.displacement = tensor_image(asset.params[asset.displacement]);
    tape.tess_normals = compute_vertex_normals(tess, faces);
    tape.displaced =
        displace(tess, tape.tess_normals, asset.tess_vertex_uvs, tape.displacement, options.wrap);
  } else {
    tape.displaced = tess;
  }

  if (asset.bones && view.frame >= 0) {
    if (static_cast<std::size_t>(view.frame) >= asset.bones->frame_count())
      throw std::invalid_argument("render: animation frame out of range");
    tape.posed = skin(tape.displaced, asset.params[asset.skin_logits].values,
        asset.bones->bone_count, asset.bones->frames[view.frame]);
  } else {
    tape.posed = tape.displaced;
  }

  tape.normals = compute_vertex_normals(tape.posed, faces);
  tape.frame   = compute_tangent_frame(asset.render_mesh, tape.posed, tape.normals);
  tape.proj    = project(tape.posed, view.camera.view_projection());
  tape.kd      = asset.pyramid(TextureKind::kd);
  tape.orm     = asset.pyramid(TextureKind::orm);
  tape.normal  = asset.pyramid(TextureKind::normal);
  tape.ambient = asset.ambient_color();

  auto W = options.width, H = options.height;
  auto rasters = depth_peel(tape.proj, faces, W, H, options.peel_passes,
      options.aa == AaMode::msaa ? options.msaa_samples : 1);

  tape.layers.resize(rasters.size());
  auto camera = view.camera.position();
  for (std::size_t p = 0; p < rasters.size(); ++p) {
    auto& layer  = tape.layers[p];
    layer.raster = std::move(rasters[p]);
    fill_gbuffer(asset, tape, layer);
    layer.rgba = shade_deferred(layer.gbuffer, view.light, camera, tape.ambient);
    if (options.aa == AaMode::msaa)
      for (std::size_t i = 0; i < layer.raster.pixel_count(); ++i)
        layer.rgba.data[i * 4 + 3] *= layer.raster.coverage[i];
  }

  Image accum(W, H, 3);
  for (std::size_t i = 0; i < accum.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c) accum.data[i * 3 + c] = options.background[c];
  for (auto p = tape.layers.size(); p-- > 0;) {
    auto& layer    = tape.layers[p];
    layer.accum_in = accum;
    layer.blended  = blend_over(layer.rgba, accum);
    if (options.aa == AaMode::antialias)
      accum = antialias(layer.blended, layer.raster, tape.proj, faces, asset.edges, &layer.aa);
    else
      accum = layer.blended;
  }
  tape.color = std::move(accum);
  return tape;
}

Image render(const Asset& asset, const View& view, const RenderOptions& options) {
  return render_forward(asset, view, options).color;
}

// --- backward ----------------------------------------------------------------

void render_backward(Asset& asset, const RenderTape& tape, const Image& grad_color) {
  const auto& o = tape.options;
  if (!grad_color.same_shape(tape.color))
    throw std::invalid_argument("render_backward: gradient shape differs");

  const auto& mesh  = asset.render_mesh;
  const auto& faces = mesh.faces;

  const TextureSlot* slots[3] = {&asset.kd, &asset.orm, &asset.normal};
  bool               learn_tex[3];
  for (int k = 0; k < 3; ++k)
    learn_tex[k] = std::any_of(slots[k]->levels.begin(), slots[k]->levels.end(),
        [&](ParamId id) { return asset.params[id].learnable; });
  bool learn_geometry = asset.learnable(asset.positions) || asset.learnable(asset.skin_logits) ||
                        asset.learnable(asset.displacement);
  bool learn_ambient = asset.learnable(asset.ambient);
  if (!learn_geometry && !learn_ambient && !learn_tex[0] && !learn_tex[1] && !learn_tex[2]) return;

  auto V = tape.posed.size();
  std::vector<Vec3d> g_posed(V), g_normals(V), g_tangents(V), g_bitangents(V), g_ndc(V);
  std::vector<double> g_uv_attr(mesh.uvs.size() * 2);
  TexturePyramid      g_tex[3] = {zeros_like(tape.kd), zeros_like(tape.orm), zeros_like(tape.normal)};
  const TexturePyramid* pyrs[3] = {&tape.kd, &tape.orm, &tape.normal};
  Vec3d               g_ambient{0, 0, 0};

  auto flat = [](const std::vector<Vec3d>& v) {
    return std::span<const double>(reinterpret_cast<const double*>(v.data()), v.size() * 3);
  };
  auto flat_mut = [](std::vector<Vec3d>& v) {
    return std::span<double>(reinterpret_cast<double*>(v.data()), v.size() * 3);
  };

  Image g = grad_color;
  for (const auto& layer : tape.layers) {
    const auto& r = layer.raster;
    auto        n = r.pixel_count();

    Image g_blended(g.width, g.height, 3);
    if (o.aa == AaMode::antialias)
      antialias_backward(layer.blended, r, tape.proj, layer.aa, g, g_blended, g_ndc);
    else
      g_blended = g;
    Image g_rgba(g.width, g.height, 4), g_accum(g.width, g.height, 3);
    blend_over_backward(layer.rgba, layer.accum_in, g_blended, g_rgba, g_accum);
    g = std::move(g_accum);

    if (o.aa == AaMode::msaa)
      for (std::size_t i = 0; i < n; ++i) g_rgba.data[i * 4 + 3] *= r.coverage[i];

    std::vector<double> g_points(n * surface_point_size);
    shade_deferred_backward(
        layer.gbuffer, tape.view.light, tape.view.camera.position(), tape.ambient, g_rgba,
        g_points, g_ambient);

    // Split the per-pixel record adjoints back into attribute images.
    Image gp(r.width, r.height, 3), gn(r.width, r.height, 3), gt(r.width, r.height, 3),
        gb(r.width, r.height, 3), guv(r.width, r.height, 2);
    bool any_uv = false;
    for (std::size_t p = 0; p < n; ++p) {
      if (r.triangle_id[p] < 0) continue;
      const double* s = &g_points[p * surface_point_size];
      for (int c = 0; c < 3; ++c) {
        gp.data[p * 3 + c] = s[c];
        gn.data[p * 3 + c] = s[3 + c];
        gt.data[p * 3 + c] = s[6 + c];
        gb.data[p * 3 + c] = s[9 + c];
      }
      const int offsets[3] = {12, 16, 19};
      Vec2d     duv{0, 0};
      for (int k = 0; k < 3; ++k) {
        if (!learn_tex[k] && !learn_geometry) continue;
        auto c = pyrs[k]->channels();
        auto d = texture_sample_backward(*pyrs[k], layer.uv[p], layer.lod[k][p], o.wrap,
            std::span<const double>(s + offsets[k], c), learn_tex[k] ? &g_tex[k] : nullptr);
        duv = duv + d;
      }
      guv.data[p * 2]     = duv.x;
      guv.data[p * 2 + 1] = duv.y;
      any_uv              = any_uv || duv.x != 0 || duv.y != 0;
    }
    if (!learn_geometry) continue;

    std::vector<double> gu(n), gv(n);
    interpolate_backward(flat(tape.posed), 3, faces, r, gp, flat_mut(g_posed), gu, gv);
    interpolate_backward(flat(tape.normals), 3, faces, r, gn, flat_mut(g_normals), gu, gv);
    interpolate_backward(flat(tape.frame.tangents), 3, faces, r, gt, flat_mut(g_tangents), gu, gv);
    interpolate_backward(
        flat(tape.frame.bitangents), 3, faces, r, gb, flat_mut(g_bitangents), gu, gv);
    if (any_uv)
      interpolate_backward(std::span<const double>(
                               reinterpret_cast<const double*>(mesh.uvs.data()), mesh.uvs.size() * 2),
          2, mesh.uv_faces, r, guv, g_uv_attr, gu, gv);
    for (std::size_t p = 0; p < n; ++p)
      barycentric_backward(tape.proj, faces, r, p, gu[p], gv[p], g_ndc);
  }

  if (learn_ambient) {
    auto& t = asset.params[asset.ambient].grad;
    for (int c = 0; c < 3; ++c) t[c] += g_ambient[c];
  }
  for (int k = 0; k < 3; ++k) {
    if (!learn_tex[k]) continue;
    collapse_pyramid_grad(g_tex[k], asset.independent_levels);
    for (std::size_t l = 0; l < slots[k]->levels.size(); ++l)
      add_image(asset.params[slots[k]->levels[l]].grad, g_tex[k].levels[l]);
  }
  if (!learn_geometry) return;

  project_backward(tape.proj, tape.view.camera.view_projection(), g_ndc, g_posed);
  compute_tangent_frame_backward(
      mesh, tape.posed, tape.normals, tape.frame, g_tangents, g_bitangents, g_posed, g_normals);
  compute_vertex_normals_backward(tape.posed, faces, g_normals, g_posed);

  std::vector<Vec3d> g_displaced;
  if (asset.bones && tape.view.frame >= 0) {
    g_displaced.assign(V, {});
    auto& logits = asset.params[asset.skin_logits];
    skin_backward(tape.displaced, logits.values, asset.bones->bone_count,
        asset.bones->frames[tape.view.frame], g_posed, g_displaced, logits.grad);
  } else {
    g_displaced = std::move(g_posed);
  }

  std::vector<Vec3d> g_tess;
  if (asset.has_displacement()) {
    g_tess.assign(V, {});
    std::vector<Vec3d> g_tess_normals(V);
    Image              g_map(tape.displacement.width, tape.displacement.height, 1);
    displace_backward(tape.tess_normals, asset.tess_vertex_uvs, tape.displacement, o.wrap,
        g_displaced, g_tess, g_tess_normals, &g_map);
    compute_vertex_normals_backward(tape.levels.back(), faces, g_tess_normals, g_tess);
    add_image(asset.params[asset.displacement].grad, g_map);
  } else {
    g_tess = std::move(g_displaced);
  }

  for (auto l = asset.plans.size(); l-- > 0;) {
    std::vector<Vec3d> g_coarse(asset.plans[l].vertex_count);
    subdivide_positions_backward(asset.plans[l], g_tess, g_coarse);
    g_tess = std::move(g_coarse);
  }
  auto g_base = as_vec3(asset.params[asset.positions].grad);
  for (std::size_t i = 0; i < g_base.size(); ++i) g_base[i] += g_tess[i];
}

// --- supersampling -----------------------------------------------------------

Image render_supersampled(const Asset& asset, const View& view, const RenderOptions& options,
    int supersample) {
  int s = 1;
  while (s * s < supersample) ++s;
  if (supersample < 1 || s * s != supersample)
    throw std::invalid_argument("supersample count must be a perfect square");
  if (s == 1) return render(asset, view, options);
  auto hi   = options;
  hi.width  = options.width * s;
  hi.height = options.height * s;
  View v    = view;
  v.camera.width  = hi.width;
  v.camera.height = hi.height;
  auto  big = render(asset, v, hi);
  Image out(options.width, options.height, 3);
  auto  inv = 1.0 / (s * s);
  for (int y = 0; y < options.height; ++y)
    for (int x = 0; x < options.width; ++x)
      for (int c = 0; c < 3; ++c) {
        // Offsets from the first sample keep constant regions bit-exact.
        auto   first = big.at(x * s, y * s, c);
        double sum   = 0;
        for (int j = 0; j < s; ++j)
          for (int i = 0; i < s; ++i) sum += big.at(x * s + i, y * s + j, c) - first;
        out.at(x, y, c) = first + sum * inv;
      }
  return out;
}

}  // namespace apfit
