// Differentiable texture lookups over mip pyramids.
//
// Texel (x, y) of a level covers uv ([x, x+1] / W, 1 - [y, y+1] / H): row 0 of
// the image is v = 1, so image files display the right way up.

#pragma once

#include <span>
#include <vector>

#include "apfit/image.hpp"
#include "apfit/math.hpp"

namespace apfit {

enum class WrapMode { clamp, repeat };

// Level 0 is the finest. Each level halves with ceil rounding. When
// independent_levels is false, levels above 0 are the 2x2 box filter of the
// level below and are refreshed from level 0 by refresh_mips().
struct TexturePyramid {
  std::vector<Image> levels;
  bool               independent_levels = false;

  int  channels() const { return levels.empty() ? 0 : levels[0].channels; }
  int  level_count() const { return static_cast<int>(levels.size()); }
};

// Full chain down to 1x1 unless max_levels limits it.
TexturePyramid make_pyramid(
    Image level0, bool independent_levels, int max_levels = 0);
int  full_mip_count(int width, int height);
void refresh_mips(TexturePyramid& pyramid);

// A pyramid-shaped zero buffer for gradients.
TexturePyramid zeros_like(const TexturePyramid& pyramid);

Image box_downsample(const Image& fine);
// Accumulates the transpose of box_downsample into grad_fine.
void box_downsample_backward(const Image& grad_coarse, Image& grad_fine);

// Folds gradients on derived levels back into level 0 (no-op for independent
// pyramids) and zeroes the derived levels.
void collapse_pyramid_grad(TexturePyramid& grad, bool independent_levels);

// Bilinear lookup of all channels into out[0..C).
void sample_bilinear(
    const Image& tex, Vec2d uv, WrapMode wrap, std::span<double> out);
// Accumulates texel adjoints into grad_tex (may be null) and returns d/duv.
Vec2d sample_bilinear_backward(const Image& tex, Vec2d uv, WrapMode wrap,
    std::span<const double> grad_out, Image* grad_tex);

// lod < 0 means "level 0, bilinear". Otherwise trilinear between the two
// bracketing levels after clamping lod to the pyramid.
void  texture_sample(const TexturePyramid& pyr, Vec2d uv, double lod,
     WrapMode wrap, std::span<double> out);
Vec2d texture_sample_backward(const TexturePyramid& pyr, Vec2d uv, double lod,
    WrapMode wrap, std::span<const double> grad_out, TexturePyramid* grad);

// Batched form: one lookup per uv, result is N x 1 x C.
Image texture_sample(const TexturePyramid& pyr, std::span<const Vec2d> uvs,
    std::span<const double> lods, WrapMode wrap);

}  // namespace apfit
