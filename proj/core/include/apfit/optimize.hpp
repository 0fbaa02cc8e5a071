// The analysis-by-synthesis loop: view / light sampling, batched render of
// the latent asset against reference images, Adam updates and schedules.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "apfit/loss.hpp"
#include "apfit/reference.hpp"
#include "apfit/render.hpp"

namespace apfit {

enum class RegularizerMode { relative, absolute, off };

// Camera and light distributions. Distances are multiples of the bounding
// radius; light_irradiance is the irradiance at the bounding-sphere center.
struct SamplerConfig {
  std::array<double, 2> camera_distance{2.5, 3.5};
  double                fovy_deg = 45;
  std::array<double, 2> light_distance{2.5, 4.0};
  std::array<double, 2> light_irradiance{2.0, 4.0};
  // Camera and light directions stay within cone_deg of cone_axis (180 = the
  // whole sphere), e.g. to keep a plane seen from its front side.
  Vec3d  cone_axis{0, 0, 1};
  double cone_deg = 180;
  std::optional<BoundingSphere> bounds;  // default: the latent's initial mesh
};

struct ReferenceConfig {
  std::string mode = "internal";  // "internal" or "external"
  std::string scene;              // internal: reference scene file
  std::string manifest;           // external: manifest file
  int         supersample = 16;
};

struct FitConfig {
  std::string     scene;  // latent scene file
  ReferenceConfig reference;

  int           iterations = 10000;
  int           width      = 256;
  int           height     = 256;
  int           batch_size = 1;
  double        lr0        = 0.01;
  std::map<std::string, double> lr_scale;  // per registry name (".mipN" share the base name)
  std::optional<double>         lambda0;
  RegularizerMode               laplacian = RegularizerMode::relative;
  LossKind                      loss      = LossKind::l1_tonemapped;
  AaMode                        aa        = AaMode::antialias;
  int                           msaa_samples = 4;
  int                           peel_passes  = 1;
  Vec3d                         background{0, 0, 0};
  WrapMode                      wrap          = WrapMode::clamp;
  bool                          mip_filtering = false;
  SamplerConfig                 sampler;
  std::uint64_t                 seed = default_seed;
  std::vector<int>              frames;  // animation frames to draw from
  int                           checkpoint_every = 0;  // 0 = final write only
  std::vector<std::array<int, 2>> prefilter_resolutions;  // non-empty = prefilter fit
  bool                          record_wall_time = false;

  static constexpr std::uint64_t default_seed = 20220101;

  RenderOptions render_options() const;
};

// Parses and validates a JSON fit config; relative paths are resolved
// against base_dir. Throws ConfigError.
FitConfig parse_fit_config(const std::string& json_text, const std::string& base_dir = ".");
FitConfig load_fit_config(const std::string& path);

// Deterministic generator for (seed, iteration, batch index).
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t index);

View sample_view(std::mt19937_64& rng, const SamplerConfig& sampler,
    const BoundingSphere& bounds, int width, int height);

struct AdamState {
  double                           beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t                    step  = 0;
  std::vector<std::vector<double>> m, v;  // per registry tensor
};

// One bias-corrected Adam update of every learnable tensor, followed by the
// material clamps. Throws Error naming the tensor on a non-finite gradient.
void adam_step(ParamRegistry& registry, AdamState& state, double lr,
    const std::map<std::string, double>& lr_scale = {});

// Keeps kd / orm / normal-map texels and the ambient color in range.
void clamp_parameters(ParamRegistry& registry);

struct FitLogRow {
  std::uint64_t iteration = 0;
  double        image_loss = 0, laplacian_loss = 0, lambda = 0, lr = 0, wall_ms = 0;
};

std::string log_header();
std::string format_log_row(const FitLogRow& row);

struct FitState {
  std::uint64_t          iteration = 0;  // next iteration to run
  bool                   lambda_ready = false;
  ScheduleState          schedule;
  AdamState              adam;
  std::vector<FitLogRow> log;
};

struct FitHooks {
  // Called after every row is appended.
  std::function<void(const FitLogRow&)> on_row;
  // Called every checkpoint_every iterations and once at the end.
  std::function<void(const Asset&, const FitState&)> on_checkpoint;
};

// Runs iterations [state.iteration, config.iterations). With a non-empty
// prefilter resolution list this is the prefiltering fit: each iteration
// picks one target resolution and textures are looked up trilinearly.
FitState fit(Asset& latent, const ReferenceProvider& reference, const FitConfig& config,
    const FitHooks& hooks = {}, std::optional<FitState> resume = std::nullopt);

// Prefiltering fit; requires independent mip levels.
FitState fit_prefilter(Asset& latent, const ReferenceProvider& reference,
    const FitConfig& config, const FitHooks& hooks = {},
    std::optional<FitState> resume = std::nullopt);

// The view used for preview images at checkpoints.
View preview_view(const FitConfig& config, const BoundingSphere& bounds);
BoundingSphere sampler_bounds(const FitConfig& config, const Asset& latent);

}  // namespace apfit
