#include "apfit/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

#include "apfit/error.hpp"
#include "apfit/scene_io.hpp"
#include "json.hpp"

namespace apfit {

namespace fs = std::filesystem;
using json   = nlohmann::json;

// --- configuration -----------------------------------------------------------

RenderOptions FitConfig::render_options() const {
  RenderOptions o;
  o.width         = width;
  o.height        = height;
  o.aa            = aa;
  o.msaa_samples  = msaa_samples;
  o.peel_passes   = peel_passes;
  o.background    = background;
  o.wrap          = wrap;
  o.mip_filtering = mip_filtering;
  return o;
}

namespace {

template <typename T>
T get(const json& j, const char* key, const std::string& what) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(what + ": '" + key + "' has the wrong type");
  }
}

std::array<double, 2> range_from(const json& j, const char* key, std::array<double, 2> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& r = j[key];
  if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
    throw ConfigError(std::string("sampler '") + key + "' must be [min, max]");
  std::array<double, 2> out{r[0].get<double>(), r[1].get<double>()};
  if (!(out[0] > 0) || !(out[1] >= out[0]))
    throw ConfigError(std::string("sampler '") + key + "' must be a non-empty positive range");
  return out;
}

Vec3d vec3_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw ConfigError(what + " must be 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& what) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError(what + ": unknown key '" + it.key() + "'");
}

template <typename E>
E enum_from(const json& j, const char* key, const std::vector<std::pair<std::string, E>>& names, E fallback) {
  if (!j.contains(key)) return fallback;
  auto s = get<std::string>(j, key, "config");
  for (const auto& [n, e] : names)
    if (n == s) return e;
  throw ConfigError(std::string("config '") + key + "': unknown value '" + s + "'");
}

std::string path_from(const json& j, const char* key, const std::string& base_dir, const std::string& what) {
  fs::path p = get<std::string>(j, key, what);
  return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).lexically_normal().string();
}

}  // namespace

FitConfig parse_fit_config(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
      {"scene", "reference", "iterations", "resolution", "batch_size", "lr", "lr_scale", "lambda0",
          "laplacian", "loss", "aa", "msaa_samples", "peel_passes", "background", "wrap",
          "mip_filtering", "sampler", "seed", "frames", "checkpoint_every",
          "prefilter_resolutions", "record_wall_time"},
      "config");

  FitConfig c;
  if (!j.contains("scene")) throw ConfigError("config needs 'scene'");
  c.scene = path_from(j, "scene", base_dir, "config");

  if (!j.contains("reference") || !j["reference"].is_object())
    throw ConfigError("config needs a 'reference' object");
  const auto& r = j["reference"];
  reject_unknown(r, {"mode", "scene", "manifest", "supersample"}, "reference");
  c.reference.mode = r.contains("mode") ? get<std::string>(r, "mode", "reference") : "internal";
  if (c.reference.mode == "internal") {
    if (!r.contains("scene")) throw ConfigError("internal reference needs 'scene'");
    c.reference.scene = path_from(r, "scene", base_dir, "reference");
  } else if (c.reference.mode == "external") {
    if (!r.contains("manifest")) throw ConfigError("external reference needs 'manifest'");
    c.reference.manifest = path_from(r, "manifest", base_dir, "reference");
  } else {
    throw ConfigError("reference mode must be 'internal' or 'external'");
  }
  if (r.contains("supersample")) c.reference.supersample = get<int>(r, "supersample", "reference");
  int s = static_cast<int>(std::lround(std::sqrt(std::max(c.reference.supersample, 0))));
  if (c.reference.supersample < 1 || s * s != c.reference.supersample)
    throw ConfigError("reference supersample must be a perfect square");

  if (j.contains("iterations")) c.iterations = get<int>(j, "iterations", "config");
  if (c.iterations < 0) throw ConfigError("iterations must be non-negative");
  if (j.contains("resolution")) {
    const auto& res = j["resolution"];
    if (!res.is_array() || res.size() != 2 || !res[0].is_number_integer() || !res[1].is_number_integer())
      throw ConfigError("resolution must be [width, height]");
    c.width  = res[0].get<int>();
    c.height = res[1].get<int>();
  }
  if (c.width < 1 || c.height < 1) throw ConfigError("resolution must be positive");
  if (j.contains("batch_size")) c.batch_size = get<int>(j, "batch_size", "config");
  if (c.batch_size < 1 || c.batch_size > 8)
    throw ConfigError("batch_size must be in [1, 8], got " + std::to_string(c.batch_size));
  if (j.contains("lr")) c.lr0 = get<double>(j, "lr", "config");
  if (!(c.lr0 > 0)) throw ConfigError("lr must be positive");
  if (j.contains("lr_scale")) {
    if (!j["lr_scale"].is_object()) throw ConfigError("lr_scale must be an object");
    for (auto it = j["lr_scale"].begin(); it != j["lr_scale"].end(); ++it) {
      if (!it.value().is_number() || !(it.value().get<double>() >= 0))
        throw ConfigError("lr_scale values must be non-negative numbers");
      c.lr_scale[it.key()] = it.value().get<double>();
    }
  }
  if (j.contains("lambda0")) {
    c.lambda0 = get<double>(j, "lambda0", "config");
    if (!(*c.lambda0 >= 0)) throw ConfigError("lambda0 must be non-negative");
  }
  c.laplacian = enum_from<RegularizerMode>(j, "laplacian",
      {{"relative", RegularizerMode::relative}, {"absolute", RegularizerMode::absolute},
          {"off", RegularizerMode::off}},
      c.laplacian);
  c.loss = enum_from<LossKind>(j, "loss", {{"l1_tonemapped", LossKind::l1_tonemapped}, {"mse", LossKind::mse}}, c.loss);
  c.aa   = enum_from<AaMode>(j, "aa",
        {{"none", AaMode::none}, {"antialias", AaMode::antialias}, {"msaa", AaMode::msaa}}, c.aa);
  if (j.contains("msaa_samples")) c.msaa_samples = get<int>(j, "msaa_samples", "config");
  if (j.contains("peel_passes")) c.peel_passes = get<int>(j, "peel_passes", "config");
  if (c.msaa_samples < 1 || c.peel_passes < 1 || c.peel_passes > 8)
    throw ConfigError("msaa_samples must be >= 1 and peel_passes in [1, 8]");
  if (j.contains("background")) c.background = vec3_from(j["background"], "background");
  c.wrap = enum_from<WrapMode>(j, "wrap", {{"clamp", WrapMode::clamp}, {"repeat", WrapMode::repeat}}, c.wrap);
  if (j.contains("mip_filtering")) c.mip_filtering = get<bool>(j, "mip_filtering", "config");

  if (j.contains("sampler")) {
    const auto& sj = j["sampler"];
    if (!sj.is_object()) throw ConfigError("sampler must be an object");
    reject_unknown(sj,
        {"camera_distance", "fovy_deg", "light_distance", "light_irradiance", "cone_axis",
            "cone_deg", "center", "radius"},
        "sampler");
    auto& sm            = c.sampler;
    sm.camera_distance  = range_from(sj, "camera_distance", sm.camera_distance);
    sm.light_distance   = range_from(sj, "light_distance", sm.light_distance);
    sm.light_irradiance = range_from(sj, "light_irradiance", sm.light_irradiance);
    if (sj.contains("fovy_deg")) sm.fovy_deg = get<double>(sj, "fovy_deg", "sampler");
    if (!(sm.fovy_deg > 0 && sm.fovy_deg < 180)) throw ConfigError("sampler fovy_deg must be in (0, 180)");
    if (sj.contains("cone_axis")) sm.cone_axis = vec3_from(sj["cone_axis"], "sampler cone_axis");
    if (!(length(sm.cone_axis) > 0)) throw ConfigError("sampler cone_axis must be non-zero");
    if (sj.contains("cone_deg")) sm.cone_deg = get<double>(sj, "cone_deg", "sampler");
    if (!(sm.cone_deg > 0 && sm.cone_deg <= 180)) throw ConfigError("sampler cone_deg must be in (0, 180]");
    if (sj.contains("center") != sj.contains("radius"))
      throw ConfigError("sampler 'center' and 'radius' go together");
    if (sj.contains("center")) {
      BoundingSphere b{vec3_from(sj["center"], "sampler center"), get<double>(sj, "radius", "sampler")};
      if (!(b.radius > 0)) throw ConfigError("sampler radius must be positive");
      sm.bounds = b;
    }
  }
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", "config");
  if (j.contains("frames")) {
    c.frames = get<std::vector<int>>(j, "frames", "config");
    if (c.frames.empty()) throw ConfigError("frames must be a non-empty list");
    for (int f : c.frames)
      if (f < 0) throw ConfigError("frames must be non-negative");
  }
  if (j.contains("checkpoint_every")) c.checkpoint_every = get<int>(j, "checkpoint_every", "config");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (j.contains("prefilter_resolutions")) {
    const auto& list = j["prefilter_resolutions"];
    if (!list.is_array() || list.empty()) throw ConfigError("prefilter_resolutions must be a non-empty list");
    for (const auto& res : list) {
      if (!res.is_array() || res.size() != 2 || !res[0].is_number_integer() ||
          !res[1].is_number_integer() || res[0].get<int>() < 1 || res[1].get<int>() < 1)
        throw ConfigError("prefilter_resolutions entries must be [width, height]");
      c.prefilter_resolutions.push_back({res[0].get<int>(), res[1].get<int>()});
    }
  }
  if (j.contains("record_wall_time")) c.record_wall_time = get<bool>(j, "record_wall_time", "config");
  return c;
}

FitConfig load_fit_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  auto dir = fs::path(path).parent_path().string();
  return parse_fit_config(text, dir.empty() ? "." : dir);
}

// --- sampling ----------------------------------------------------------------

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(iteration), static_cast<std::uint32_t>(iteration >> 32),
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

double uniform(std::mt19937_64& rng, double a, double b) {
  return std::uniform_real_distribution<double>(a, b)(rng);
}

// Uniform on the spherical cap of half-angle cone_deg around axis.
Vec3d cone_direction(std::mt19937_64& rng, const Vec3d& axis, double cone_deg) {
  auto   n   = normalize(axis);
  auto   a   = std::abs(n.x) < 0.9 ? Vec3d{1, 0, 0} : Vec3d{0, 1, 0};
  auto   t   = normalize(cross(a, n));
  auto   b   = cross(n, t);
  double z   = uniform(rng, std::cos(cone_deg * pi / 180), 1.0);
  double phi = uniform(rng, 0, 2 * pi);
  double r   = std::sqrt(std::max(0.0, 1 - z * z));
  return t * (r * std::cos(phi)) + b * (r * std::sin(phi)) + n * z;
}

}  // namespace

View sample_view(std::mt19937_64& rng, const SamplerConfig& s, const BoundingSphere& bounds,
    int width, int height) {
  double R   = bounds.radius > 0 ? bounds.radius : 1.0;
  auto   dir = cone_direction(rng, s.cone_axis, s.cone_deg);
  double d   = uniform(rng, s.camera_distance[0], s.camera_distance[1]) * R;
  // Random roll: rotate a reference up vector around the viewing direction.
  auto   a    = std::abs(dir.y) < 0.9 ? Vec3d{0, 1, 0} : Vec3d{1, 0, 0};
  auto   e1   = normalize(a - dir * dot(dir, a));
  auto   e2   = cross(dir, e1);
  double roll = uniform(rng, 0, 2 * pi);
  auto   up   = e1 * std::cos(roll) + e2 * std::sin(roll);

  View v;
  auto eye    = bounds.center + dir * d;
  double near = std::max(0.5 * (d - R), 1e-3 * d);
  v.camera    = Camera::look_at(eye, bounds.center, up, s.fovy_deg * pi / 180, width, height, near, d + 2 * R);

  auto   ldir = cone_direction(rng, s.cone_axis, s.cone_deg);
  double ld   = uniform(rng, s.light_distance[0], s.light_distance[1]) * R;
  double e    = uniform(rng, s.light_irradiance[0], s.light_irradiance[1]);
  v.light.position  = bounds.center + ldir * ld;
  v.light.intensity = Vec3d{1, 1, 1} * (e * ld * ld);
  return v;
}

BoundingSphere sampler_bounds(const FitConfig& config, const Asset& latent) {
  if (config.sampler.bounds) return *config.sampler.bounds;
  // The initial mesh, so that a resumed fit samples the same views.
  return bounding_sphere(latent.mesh.positions.empty() ? latent.base_positions() : latent.mesh.positions);
}

View preview_view(const FitConfig& config, const BoundingSphere& bounds) {
  const auto& s   = config.sampler;
  double      R   = bounds.radius > 0 ? bounds.radius : 1.0;
  auto        n   = normalize(s.cone_axis);
  auto        a   = std::abs(n.x) < 0.9 ? Vec3d{1, 0, 0} : Vec3d{0, 1, 0};
  auto        t   = normalize(cross(a, n));
  // A fixed three-quarter view, tilted off the cone axis when the cone allows.
  double tilt = std::min(35.0, 0.5 * s.cone_deg) * pi / 180;
  auto   dir  = normalize(n * std::cos(tilt) + t * std::sin(tilt));
  double d    = 0.5 * (s.camera_distance[0] + s.camera_distance[1]) * R;
  auto   up   = std::abs(dot(dir, Vec3d{0, 1, 0})) < 0.95 ? Vec3d{0, 1, 0} : Vec3d{0, 0, 1};
  View   v;
  v.camera = Camera::look_at(bounds.center + dir * d, bounds.center, up, s.fovy_deg * pi / 180,
      config.width, config.height, std::max(0.5 * (d - R), 1e-3 * d), d + 2 * R);
  double ld = 0.5 * (s.light_distance[0] + s.light_distance[1]) * R;
  double e  = 0.5 * (s.light_irradiance[0] + s.light_irradiance[1]);
  v.light.position  = bounds.center + normalize(dir + cross(dir, up) * 0.5 + up * 0.5) * ld;
  v.light.intensity = Vec3d{1, 1, 1} * (e * ld * ld);
  if (!config.frames.empty()) v.frame = config.frames.front();
  return v;
}

// --- Adam --------------------------------------------------------------------

namespace {

std::string base_name(const std::string& name) {
  auto p = name.find(".mip");
  return p == std::string::npos ? name : name.substr(0, p);
}

void clamp_span(std::vector<double>& v, int channels, const std::vector<std::array<double, 2>>& ranges) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& r = ranges[i % channels];
    v[i]          = std::clamp(v[i], r[0], r[1]);
  }
}

}  // namespace

void adam_step(ParamRegistry& reg, AdamState& s, double lr, const std::map<std::string, double>& lr_scale) {
  if (s.m.size() != reg.size()) {
    s.m.assign(reg.size(), {});
    s.v.assign(reg.size(), {});
  }
  for (std::size_t i = 0; i < reg.size(); ++i) {
    const auto& t = reg.at(i);
    if (!t.learnable) continue;
    for (double g : t.grad)
      if (!std::isfinite(g)) throw Error("non-finite gradient in parameter '" + t.name + "'");
  }
  ++s.step;
  double c1 = 1 - std::pow(s.beta1, static_cast<double>(s.step));
  double c2 = 1 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < reg.size(); ++i) {
    auto& t = reg.at(i);
    if (!t.learnable) continue;
    auto& m = s.m[i];
    auto& v = s.v[i];
    if (m.size() != t.size()) {
      m.assign(t.size(), 0.0);
      v.assign(t.size(), 0.0);
    }
    double step = lr;
    if (auto it = lr_scale.find(base_name(t.name)); it != lr_scale.end()) step *= it->second;
    for (std::size_t k = 0; k < t.size(); ++k) {
      double g = t.grad[k];
      m[k]     = s.beta1 * m[k] + (1 - s.beta1) * g;
      v[k]     = s.beta2 * v[k] + (1 - s.beta2) * g * g;
      t.values[k] -= step * (m[k] / c1) / (std::sqrt(v[k] / c2) + s.epsilon);
    }
  }
  clamp_parameters(reg);
}

void clamp_parameters(ParamRegistry& reg) {
  for (std::size_t i = 0; i < reg.size(); ++i) {
    auto& t    = reg.at(i);
    auto  base = base_name(t.name);
    if (base == "kd")
      clamp_span(t.values, 4, {{0, 1}, {0, 1}, {0, 1}, {0, 1}});
    else if (base == "orm")
      clamp_span(t.values, 3, {{0, 1}, {min_roughness, 1}, {0, 1}});
    else if (base == "normal")
      clamp_span(t.values, 3, {{0, 1}, {0, 1}, {0, 1}});
    else if (base == "ambient")
      clamp_span(t.values, 1, {{0, std::numeric_limits<double>::infinity()}});
  }
}

// --- log -----------------------------------------------------------------------

std::string log_header() { return "iter,L_image,L_lap,lambda,lr,wall_ms"; }

std::string format_log_row(const FitLogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g",
      static_cast<unsigned long long>(r.iteration), r.image_loss, r.laplacian_loss, r.lambda, r.lr,
      r.wall_ms);
  return buf;
}

// --- fit loop ------------------------------------------------------------------

namespace {

bool laplacian_active(const Asset& a, const FitConfig& c) {
  return c.laplacian != RegularizerMode::off && a.learnable(a.positions);
}

std::span<const Vec3d> laplacian_reference(const Asset& a, const FitConfig& c) {
  if (c.laplacian == RegularizerMode::relative) return a.mesh.initial_differentials;
  return {};
}

// Draws the batch item's conditions from its own (seed, iteration, index)
// stream so that resumed runs see the same sequence.
struct BatchItem {
  View        view;
  std::size_t record = 0;
};

BatchItem draw_item(const FitConfig& cfg, const ReferenceProvider& ref, const BoundingSphere& bounds,
    std::uint64_t t, std::uint64_t b, int width, int height) {
  auto      rng = make_rng(cfg.seed, t, b);
  BatchItem item;
  if (ref.has_fixed_views()) {
    auto n      = ref.view_count();
    item.record = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    item.view   = ref.view(item.record);
    item.view.camera.width  = width;
    item.view.camera.height = height;
  } else {
    item.view = sample_view(rng, cfg.sampler, bounds, width, height);
  }
  if (!cfg.frames.empty())
    item.view.frame = cfg.frames[std::uniform_int_distribution<std::size_t>(0, cfg.frames.size() - 1)(rng)];
  return item;
}

FitState run(Asset& latent, const ReferenceProvider& ref, const FitConfig& cfg, const FitHooks& hooks,
    std::optional<FitState> resume, bool prefilter) {
  if (!latent.finalized) finalize(latent);
  if (!cfg.frames.empty()) {
    if (!latent.bones) throw ConfigError("config lists animation frames but the scene has no animation");
    for (int f : cfg.frames)
      if (static_cast<std::size_t>(f) >= latent.bones->frame_count())
        throw ConfigError("animation frame " + std::to_string(f) + " is out of range");
  }
  if (prefilter && !latent.independent_levels)
    throw ConfigError("prefiltering needs a scene with independent_levels");

  FitState st = resume ? std::move(*resume) : FitState{};
  if (!st.adam.m.empty() && st.adam.m.size() != latent.params.size())
    throw Error("resume state does not match the asset's parameters");
  auto bounds = sampler_bounds(cfg, latent);
  auto opts   = cfg.render_options();
  if (prefilter) opts.mip_filtering = true;
  bool lap_on = laplacian_active(latent, cfg);
  auto lap_ref = laplacian_reference(latent, cfg);
  auto& pos    = latent.params[latent.positions];

  using clock = std::chrono::steady_clock;
  for (auto t = st.iteration; t < static_cast<std::uint64_t>(cfg.iterations); ++t) {
    auto start = clock::now();
    latent.params.zero_grads();
    auto o = opts;
    if (prefilter) {
      // A stream index past every batch index keeps the draws independent.
      auto rng = make_rng(cfg.seed, t, 1000);
      auto k   = std::uniform_int_distribution<std::size_t>(0, cfg.prefilter_resolutions.size() - 1)(rng);
      o.width  = cfg.prefilter_resolutions[k][0];
      o.height = cfg.prefilter_resolutions[k][1];
    }

    double image = 0;
    double scale = 1.0 / cfg.batch_size;
    for (int b = 0; b < cfg.batch_size; ++b) {
      auto  item = draw_item(cfg, ref, bounds, t, static_cast<std::uint64_t>(b), o.width, o.height);
      Image target;
      try {
        // The reference renders as configured; only the latent's lookups
        // switch to trilinear when prefiltering.
        auto ref_o          = o;
        ref_o.mip_filtering = cfg.mip_filtering;
        target              = ref.fetch(item.view, item.record, ref_o);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw Error(std::string("reference fetch failed: ") + e.what());
      }
      auto  tape = render_forward(latent, item.view, o);
      Image grad(o.width, o.height, 3);
      image += scale * image_loss(cfg.loss, tape.color, target, &grad, scale);
      render_backward(latent, tape, grad);
    }
    if (!std::isfinite(image)) throw Error("non-finite image loss at iteration " + std::to_string(t));

    double lap = 0;
    std::vector<Vec3d> base;
    if (lap_on) {
      base = latent.base_positions();
      lap  = laplacian_loss(base, latent.adjacency, lap_ref);
    }
    if (!st.lambda_ready) {
      LambdaInit init{0, 0};
      if (lap_on) {
        // In relative mode the regularizer is zero at the start, so the
        // heuristic uses the initial mesh's absolute Laplacian energy.
        double denom = cfg.laplacian == RegularizerMode::relative && !cfg.lambda0
                           ? laplacian_loss(base, latent.adjacency, {})
                           : lap;
        try {
          init = init_lambda(image, denom, cfg.lambda0);
        } catch (const std::invalid_argument&) {
          throw ConfigError("initial Laplacian energy is zero; set lambda0 in the config");
        }
      }
      st.schedule     = make_schedule(init, cfg.lr0);
      st.lambda_ready = true;
    }
    double lambda = st.schedule.lambda_current;
    if (lap_on && lambda != 0) {
      std::vector<Vec3d> g(base.size());
      laplacian_loss_backward(base, latent.adjacency, lap_ref, lambda, g);
      for (std::size_t i = 0; i < g.size(); ++i) {
        pos.grad[3 * i] += g[i].x;
        pos.grad[3 * i + 1] += g[i].y;
        pos.grad[3 * i + 2] += g[i].z;
      }
    }
    double lr = lr_at(t, cfg.lr0, st.schedule.k_lr);
    adam_step(latent.params, st.adam, lr, cfg.lr_scale);

    FitLogRow row{t, image, lap, lambda, lr, 0};
    if (cfg.record_wall_time)
      row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    st.log.push_back(row);
    step_lambda(st.schedule);
    st.iteration = t + 1;
    if (hooks.on_row) hooks.on_row(row);
    bool last = st.iteration == static_cast<std::uint64_t>(cfg.iterations);
    if (hooks.on_checkpoint && !last && cfg.checkpoint_every > 0 && st.iteration % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(latent, st);
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(latent, st);
  return st;
}

}  // namespace

FitState fit(Asset& latent, const ReferenceProvider& reference, const FitConfig& config,
    const FitHooks& hooks, std::optional<FitState> resume) {
  return run(latent, reference, config, hooks, std::move(resume), !config.prefilter_resolutions.empty());
}

FitState fit_prefilter(Asset& latent, const ReferenceProvider& reference, const FitConfig& config,
    const FitHooks& hooks, std::optional<FitState> resume) {
  auto cfg = config;
  if (cfg.prefilter_resolutions.empty()) cfg.prefilter_resolutions.push_back({cfg.width, cfg.height});
  return run(latent, reference, cfg, hooks, std::move(resume), true);
}

}  // namespace apfit
