#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "apfit/error.hpp"
#include "apfit/gradcheck.hpp"
#include "apfit/optimize.hpp"
#include "apfit/reference.hpp"
#include "apfit/render.hpp"
#include "apfit/scene_io.hpp"

namespace apfit::cli {
namespace {

namespace fs = std::filesystem;

// Raised for argument combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::map<std::string, AaMode> aa_modes{
    {"none", AaMode::none}, {"antialias", AaMode::antialias}, {"msaa", AaMode::msaa}};

std::string iteration_stem(std::uint64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%06llu", static_cast<unsigned long long>(iteration));
  return buf;
}

std::string base_name(const std::string& tensor) { return tensor.substr(0, tensor.find(".mip")); }

// --- fit / bake --------------------------------------------------------------

struct FitArgs {
  std::string                  config;
  std::string                  out;
  std::string                  resume;
  std::optional<std::uint64_t> seed;
  std::vector<std::string>     learn;
};

std::unique_ptr<ReferenceProvider> make_reference(const FitConfig& cfg) {
  if (cfg.reference.mode == "external")
    return std::make_unique<ExternalReference>(load_manifest(cfg.reference.manifest));
  return std::make_unique<InternalReference>(load_scene(cfg.reference.scene), cfg.reference.supersample);
}

// Freezes every tensor whose base name is not in `learn`.
void apply_learn_set(Asset& asset, const std::vector<std::string>& learn) {
  std::set<std::string> names(learn.begin(), learn.end());
  for (std::size_t i = 0; i < asset.params.size(); ++i) {
    auto& t     = asset.params.at(i);
    t.learnable = names.count(base_name(t.name)) > 0;
  }
}

struct Preview {
  View  view;
  Image reference;
};

// Fixed-view references preview their first record; otherwise the fixed
// three-quarter view around the sampler bounds.
Preview make_preview(const FitConfig& cfg, const Asset& latent, const ReferenceProvider& ref,
    const RenderOptions& opts) {
  Preview p;
  if (ref.has_fixed_views()) {
    p.view               = ref.view(0);
    p.view.camera.width  = opts.width;
    p.view.camera.height = opts.height;
  } else {
    p.view = preview_view(cfg, sampler_bounds(cfg, latent));
  }
  if (!cfg.frames.empty()) p.view.frame = cfg.frames.front();
  // The reference renders as configured, even when the latent prefilters.
  auto ref_opts          = opts;
  ref_opts.mip_filtering = cfg.mip_filtering;
  p.reference            = ref.fetch(p.view, 0, ref_opts);
  return p;
}

int cmd_fit(const FitArgs& a, bool bake, std::ostream& out) {
  FitConfig cfg = load_fit_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  Asset latent = load_scene(cfg.scene);
  if (bake) apply_learn_set(latent, a.learn);
  auto reference = make_reference(cfg);

  std::optional<FitState> resume;
  if (!a.resume.empty()) {
    auto ckpt = read_checkpoint(a.resume);
    apply_checkpoint(ckpt, latent);
    if (ckpt.state.iteration > static_cast<std::uint64_t>(cfg.iterations))
      throw ConfigError("checkpoint is past the configured iteration count");
    resume = std::move(ckpt.state);
  }

  fs::path dir(a.out);
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "previews");

  bool prefilter = !cfg.prefilter_resolutions.empty();
  auto opts      = cfg.render_options();
  if (prefilter) opts.mip_filtering = true;
  auto preview = make_preview(cfg, latent, *reference, opts);
  write_text_file((dir / "previews" / "preview_camera.json").string(), camera_json(preview.view.camera));
  write_text_file((dir / "previews" / "preview_light.json").string(), light_json(preview.view.light));

  auto          log_path = (dir / "log.csv").string();
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw Error("cannot write " + log_path);
  log << log_header() << '\n';
  if (resume)
    for (const auto& row : resume->log) log << format_log_row(row) << '\n';
  log.flush();

  FitHooks hooks;
  hooks.on_row = [&](const FitLogRow& row) {
    log << format_log_row(row) << '\n';
    log.flush();
    if (!log) throw Error("cannot write " + log_path);
  };
  hooks.on_checkpoint = [&](const Asset& asset, const FitState& st) {
    auto stem = iteration_stem(st.iteration);
    write_checkpoint(make_checkpoint(asset, st), (dir / "checkpoints" / (stem + ".ckpt")).string());
    write_preview_png(side_by_side({render(asset, preview.view, opts), preview.reference}),
        (dir / "previews" / (stem + ".png")).string());
  };

  auto state = prefilter ? fit_prefilter(latent, *reference, cfg, hooks, std::move(resume))
                         : fit(latent, *reference, cfg, hooks, std::move(resume));
  save_asset(latent, (dir / "asset").string(), "asset");

  out << "iterations: " << state.iteration << '\n';
  if (!state.log.empty()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", state.log.back().image_loss);
    out << "final L_image: " << buf << '\n';
  }
  out << "output: " << dir.string() << '\n';
  return exit_ok;
}

// --- render ------------------------------------------------------------------

struct RenderArgs {
  std::string scene, camera, light, out, checkpoint;
  int         width = 256, height = 256, spp = 1;
  std::string aa    = "antialias";
  int         msaa_samples = 4, peel_passes = 1, frame = -1;
  bool        mip_filtering = false;
};

int cmd_render(const RenderArgs& a, std::ostream& out) {
  auto ext = fs::path(a.out).extension().string();
  if (ext != ".pfm" && ext != ".png") throw UsageError("--out must end in .pfm or .png");
  int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(a.spp))));
  if (s * s != a.spp) throw UsageError("--spp must be a perfect square");

  RenderOptions o;
  o.width         = a.width;
  o.height        = a.height;
  o.aa            = aa_modes.at(a.aa);
  o.msaa_samples  = a.msaa_samples;
  o.peel_passes   = a.peel_passes;
  o.mip_filtering = a.mip_filtering;

  Asset asset = load_scene(a.scene);
  if (!a.checkpoint.empty()) apply_checkpoint(read_checkpoint(a.checkpoint), asset);
  View v;
  v.camera = parse_camera(read_text_file(a.camera), a.width, a.height);
  v.light  = parse_light(read_text_file(a.light));
  v.frame  = a.frame;
  if (v.frame >= 0 && (!asset.bones || static_cast<std::size_t>(v.frame) >= asset.bones->frame_count()))
    throw Error("frame " + std::to_string(v.frame) + " is not in the scene's animation");

  Image img = s == 1 ? render(asset, v, o) : render_supersampled(asset, v, o, a.spp);
  if (ext == ".pfm")
    write_pfm(img, a.out);
  else
    write_preview_png(img, a.out);
  out << "wrote " << a.out << '\n';
  return exit_ok;
}

// --- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
  std::string suite        = "all";
  double      epsilon      = 1e-4;
  double      tolerance    = 1e-3;
  double      min_fraction = 0.95;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  auto reports = run_gradcheck(a.suite, a.epsilon, a.tolerance, a.min_fraction);
  int  failed  = 0;
  for (const auto& r : reports) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-4s %-10s %-28s max_rel_err=%.3e within=%.1f%%",
        r.passed ? "PASS" : "FAIL", r.suite.c_str(), r.op.c_str(), r.result.max_relative_error,
        100.0 * r.fraction_within);
    out << buf << '\n';
    if (r.passed) continue;
    ++failed;
    if (!r.error.empty()) out << "     error: " << r.error << '\n';
    if (!r.failing.empty()) {
      out << "     failing coordinates:";
      std::size_t shown = std::min<std::size_t>(r.failing.size(), 16);
      for (std::size_t i = 0; i < shown; ++i) out << ' ' << r.failing[i];
      if (shown < r.failing.size()) out << " ... (" << r.failing.size() << " total)";
      out << '\n';
    }
  }
  out << reports.size() - failed << '/' << reports.size() << " operations passed\n";
  return failed == 0 ? exit_ok : exit_runtime;
}

// --- subdivide / info --------------------------------------------------------

struct SubdivideArgs {
  std::string in, out;
  int         levels    = 1;
  bool        allow_fan = false;
};

void print_mesh_summary(const Mesh& mesh, std::ostream& out) {
  auto v = static_cast<long long>(mesh.vertex_count());
  auto e = static_cast<long long>(edge_count(mesh.faces));
  auto f = static_cast<long long>(mesh.face_count());
  auto b = bounding_sphere(mesh.positions);
  out << "vertices: " << v << "\nfaces: " << f << "\nedges: " << e << "\neuler: " << v - e + f
      << "\nuvs: " << mesh.uvs.size() << "\nbounds: center (" << b.center.x << ", " << b.center.y
      << ", " << b.center.z << ") radius " << b.radius << '\n';
}

int cmd_subdivide(const SubdivideArgs& a, std::ostream& out) {
  auto mesh = load_obj(a.in, a.allow_fan).mesh;
  for (int i = 0; i < a.levels; ++i) mesh = subdivide(mesh);
  save_obj(mesh, a.out);
  print_mesh_summary(mesh, out);
  return exit_ok;
}

void print_tensors(const std::vector<ParamTensor>& tensors, std::ostream& out) {
  out << "tensors:\n";
  for (const auto& t : tensors) {
    std::string shape;
    for (auto d : t.shape) shape += (shape.empty() ? "" : "x") + std::to_string(d);
    out << "  " << t.name << " [" << shape << "]" << (t.learnable ? " learnable" : " frozen") << '\n';
  }
}

struct InfoArgs {
  std::string scene, obj, checkpoint;
};

int cmd_info(const InfoArgs& a, std::ostream& out) {
  if (!a.obj.empty()) {
    print_mesh_summary(load_obj(a.obj, true).mesh, out);
  } else if (!a.scene.empty()) {
    auto asset = load_scene(a.scene);
    print_mesh_summary(asset.mesh, out);
    out << "subdivision: " << asset.subdivision << " (" << asset.render_mesh.face_count()
        << " rendered faces)\nindependent mip levels: " << (asset.independent_levels ? "yes" : "no")
        << "\nanimation frames: " << (asset.bones ? asset.bones->frame_count() : 0) << '\n';
    std::vector<ParamTensor> tensors;
    for (std::size_t i = 0; i < asset.params.size(); ++i) tensors.push_back(asset.params.at(i));
    print_tensors(tensors, out);
  } else {
    auto c = read_checkpoint(a.checkpoint);
    out << "iteration: " << c.state.iteration << "\nlog rows: " << c.state.log.size()
        << "\nadam steps: " << c.state.adam.step << '\n';
    print_tensors(c.tensors, out);
  }
  return exit_ok;
}

void print_usage_error(const CLI::App& app, const std::string& message, std::ostream& err) {
  err << "error: " << message << "\n\n";
  auto subs = app.get_subcommands();
  err << (subs.empty() ? app.help() : subs.front()->help());
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Appearance-driven fitting of triangle meshes and materials", "apfit"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto*   fit = app.add_subcommand("fit", "Fit a latent scene to reference images");
  fit->add_option("--config", fit_args.config, "Fit config JSON")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fit_args.out, "Output directory")->required();
  fit->add_option("--seed", fit_args.seed, "Random seed (default: the config's, else 20220101)");
  fit->add_option("--resume", fit_args.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  FitArgs bake_args;
  bake_args.learn = {"normal"};
  auto* bake = app.add_subcommand("bake", "Fit with only the listed parameter groups learnable");
  bake->add_option("--config", bake_args.config, "Fit config JSON")->required()->check(CLI::ExistingFile);
  bake->add_option("--out", bake_args.out, "Output directory")->required();
  bake->add_option("--seed", bake_args.seed, "Random seed (default: the config's, else 20220101)");
  bake->add_option("--resume", bake_args.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  bake->add_option("--learn", bake_args.learn, "Learnable groups (default: normal)")
      ->check(CLI::IsMember({"normal", "positions"}))
      ->capture_default_str();

  RenderArgs render_args;
  auto*      rnd = app.add_subcommand("render", "Render a scene from one camera");
  rnd->add_option("--scene", render_args.scene, "Scene JSON")->required();
  rnd->add_option("--camera", render_args.camera, "Camera JSON")->required();
  rnd->add_option("--light", render_args.light, "Light JSON")->required();
  rnd->add_option("--out", render_args.out, "Output image (.pfm linear, .png tone-mapped)")->required();
  rnd->add_option("--checkpoint", render_args.checkpoint, "Apply checkpoint parameters");
  rnd->add_option("--width", render_args.width)->capture_default_str()->check(CLI::PositiveNumber);
  rnd->add_option("--height", render_args.height)->capture_default_str()->check(CLI::PositiveNumber);
  rnd->add_option("--spp", render_args.spp, "Samples per pixel (a perfect square)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  rnd->add_option("--aa", render_args.aa)->capture_default_str()->check(CLI::IsMember({"none", "antialias", "msaa"}));
  rnd->add_option("--msaa-samples", render_args.msaa_samples)->capture_default_str()->check(CLI::IsMember({1, 4, 8, 16}));
  rnd->add_option("--peel-passes", render_args.peel_passes)->capture_default_str()->check(CLI::Range(1, 8));
  rnd->add_option("--frame", render_args.frame, "Animation frame (-1 = rest pose)")->capture_default_str();
  rnd->add_flag("--mip-filtering", render_args.mip_filtering, "Trilinear texture lookups");

  GradcheckArgs gc_args;
  std::vector<std::string> suites{"all"};
  for (const auto& s : gradcheck_suites()) suites.push_back(s);
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every adjoint");
  gc->add_option("--suite", gc_args.suite)->capture_default_str()->check(CLI::IsMember(suites));
  gc->add_option("--epsilon", gc_args.epsilon)->capture_default_str()->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gc_args.tolerance)->capture_default_str()->check(CLI::PositiveNumber);
  gc->add_option("--min-fraction", gc_args.min_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));

  SubdivideArgs sd_args;
  auto*         sd = app.add_subcommand("subdivide", "Midpoint-subdivide an OBJ mesh (each level quadruples the faces)");
  sd->add_option("--in", sd_args.in, "Input OBJ")->required()->check(CLI::ExistingFile);
  sd->add_option("--out", sd_args.out, "Output OBJ")->required();
  sd->add_option("--levels", sd_args.levels)->capture_default_str()->check(CLI::Range(1, 6));
  sd->add_flag("--allow-fan", sd_args.allow_fan, "Fan-triangulate polygons with more than four corners");

  InfoArgs info_args;
  auto*    info  = app.add_subcommand("info", "Summarize a mesh, scene or checkpoint");
  auto*    group = info->add_option_group("input");
  group->add_option("--scene", info_args.scene)->check(CLI::ExistingFile);
  group->add_option("--obj", info_args.obj)->check(CLI::ExistingFile);
  group->add_option("--checkpoint", info_args.checkpoint)->check(CLI::ExistingFile);
  group->require_option(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    print_usage_error(app, e.what(), err);
    return exit_usage;
  }

  try {
    if (*fit) return cmd_fit(fit_args, false, out);
    if (*bake) return cmd_fit(bake_args, true, out);
    if (*rnd) return cmd_render(render_args, out);
    if (*gc) return cmd_gradcheck(gc_args, out);
    if (*sd) return cmd_subdivide(sd_args, out);
    return cmd_info(info_args, out);
  } catch (const UsageError& e) {
    print_usage_error(app, e.what(), err);
    return exit_usage;
  } catch (const ConfigError& e) {
    // Render treats every load failure as a runtime error.
    err << "error: " << e.what() << '\n';
    return *rnd ? exit_runtime : exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_runtime;
  }
}

}  // namespace apfit::cli
