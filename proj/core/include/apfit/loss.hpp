// Image losses, the regularized objective, lambda / learning-rate schedules
// and reporting metrics.

#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>

#include "apfit/geometry.hpp"
#include "apfit/image.hpp"

namespace apfit {

enum class LossKind { l1_tonemapped, mse };

// Mean |tone_map(img) - tone_map(ref)| over pixels and channels. When grad
// is non-null, d loss / d img is accumulated into it (scaled by `scale`).
double l1_tonemapped(const Image& img, const Image& ref, Image* grad = nullptr,
    double scale = 1.0);
// Mean squared difference on linear values.
double mse(const Image& img, const Image& ref, Image* grad = nullptr,
    double scale = 1.0);
double image_loss(LossKind kind, const Image& img, const Image& ref,
    Image* grad = nullptr, double scale = 1.0);

struct ScheduleState {
  double        lambda0        = 0;
  double        lambda_min     = 0;
  double        lambda_current = 0;
  double        k_lambda       = 1e-6;
  double        lr0            = 0.01;
  double        k_lr           = 0.0002;
  std::uint64_t iteration      = 0;
};

// L_image + lambda * L_lap.
double objective(double image_loss, double laplacian_loss, const ScheduleState& s);

struct LambdaInit {
  double lambda0, lambda_min;
};

// lambda0 = 0.25 L_image / L_lap unless overridden; lambda_min = 2% of it.
// Throws std::invalid_argument when L_lap is zero and there is no override.
LambdaInit init_lambda(double initial_image_loss, double initial_laplacian_loss,
    std::optional<double> user_override = std::nullopt);

ScheduleState make_schedule(LambdaInit lambda, double lr0);

// Advances to iteration t + 1 and applies
// lambda_t = (lambda_{t-1} - lambda_min) 10^(-k t) + lambda_min.
double step_lambda(ScheduleState& s);

// lr_0 10^(-k t).
double lr_at(std::uint64_t t, double lr0, double k = 0.0002);

inline constexpr double psnr_identical = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE); +inf when the images are identical.
double psnr(const Image& img, const Image& ref, double peak = 1.0);
// PSNR of the tone-mapped images with peak 1.
double psnr_tonemapped(const Image& img, const Image& ref);

// Area-uniform surface samples.
std::vector<Vec3d> sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed);

// Symmetric mean nearest-neighbour distance between area-uniform point
// samples of both surfaces (mean over the union of both sample sets).
double chamfer_l1(const Mesh& a, const Mesh& b, std::size_t sample_count = 100000,
    std::uint64_t seed = 7);

}  // namespace apfit
