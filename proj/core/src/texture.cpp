#include "apfit/texture.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace apfit {

namespace {

int wrap_index(int i, int n, WrapMode wrap) {
  if (wrap == WrapMode::clamp) return std::clamp(i, 0, n - 1);
  return ((i % n) + n) % n;
}

struct Footprint {
  int    x0, x1, y0, y1;
  double fx, fy;
};

Footprint footprint(const Image& tex, Vec2d uv, WrapMode wrap) {
  auto x  = uv.x * tex.width - 0.5;
  auto y  = (1 - uv.y) * tex.height - 0.5;
  auto xf = std::floor(x), yf = std::floor(y);
  auto xi = static_cast<int>(xf), yi = static_cast<int>(yf);
  return {wrap_index(xi, tex.width, wrap), wrap_index(xi + 1, tex.width, wrap),
      wrap_index(yi, tex.height, wrap), wrap_index(yi + 1, tex.height, wrap),
      x - xf, y - yf};
}

}  // namespace

int full_mip_count(int width, int height) {
  int n = 1;
  while (width > 1 || height > 1) {
    width  = (width + 1) / 2;
    height = (height + 1) / 2;
    ++n;
  }
  return n;
}

Image box_downsample(const Image& fine) {
  Image coarse((fine.width + 1) / 2, (fine.height + 1) / 2, fine.channels);
  for (int y = 0; y < coarse.height; ++y) {
    for (int x = 0; x < coarse.width; ++x) {
      int xe = std::min(2 * x + 2, fine.width), ye = std::min(2 * y + 2, fine.height);
      double inv = 1.0 / ((xe - 2 * x) * (ye - 2 * y));
      for (int c = 0; c < fine.channels; ++c) {
        double s = 0;
        for (int j = 2 * y; j < ye; ++j)
          for (int i = 2 * x; i < xe; ++i) s += fine.at(i, j, c);
        coarse.at(x, y, c) = s * inv;
      }
    }
  }
  return coarse;
}

void box_downsample_backward(const Image& grad_coarse, Image& grad_fine) {
  for (int y = 0; y < grad_coarse.height; ++y) {
    for (int x = 0; x < grad_coarse.width; ++x) {
      int xe = std::min(2 * x + 2, grad_fine.width);
      int ye = std::min(2 * y + 2, grad_fine.height);
      double inv = 1.0 / ((xe - 2 * x) * (ye - 2 * y));
      for (int c = 0; c < grad_coarse.channels; ++c) {
        auto g = grad_coarse.at(x, y, c) * inv;
        for (int j = 2 * y; j < ye; ++j)
          for (int i = 2 * x; i < xe; ++i) grad_fine.at(i, j, c) += g;
      }
    }
  }
}

TexturePyramid make_pyramid(Image level0, bool independent, int max_levels) {
  if (level0.width < 1 || level0.height < 1 || level0.channels < 1)
    throw std::invalid_argument("make_pyramid: empty texture");
  auto count = full_mip_count(level0.width, level0.height);
  if (max_levels > 0) count = std::min(count, max_levels);
  TexturePyramid p;
  p.independent_levels = independent;
  p.levels.push_back(std::move(level0));
  for (int l = 1; l < count; ++l) p.levels.push_back(box_downsample(p.levels.back()));
  return p;
}

void refresh_mips(TexturePyramid& p) {
  if (p.independent_levels) return;
  for (std::size_t l = 1; l < p.levels.size(); ++l)
    p.levels[l] = box_downsample(p.levels[l - 1]);
}

TexturePyramid zeros_like(const TexturePyramid& p) {
  TexturePyramid z;
  z.independent_levels = p.independent_levels;
  for (const auto& l : p.levels) z.levels.emplace_back(l.width, l.height, l.channels);
  return z;
}

void collapse_pyramid_grad(TexturePyramid& grad, bool independent) {
  if (independent) return;
  for (auto l = grad.levels.size(); l-- > 1;) {
    box_downsample_backward(grad.levels[l], grad.levels[l - 1]);
    std::fill(grad.levels[l].data.begin(), grad.levels[l].data.end(), 0.0);
  }
}

void sample_bilinear(
    const Image& tex, Vec2d uv, WrapMode wrap, std::span<double> out) {
  auto f = footprint(tex, uv, wrap);
  for (int c = 0; c < tex.channels; ++c) {
    auto t00 = tex.at(f.x0, f.y0, c), t10 = tex.at(f.x1, f.y0, c);
    auto t01 = tex.at(f.x0, f.y1, c), t11 = tex.at(f.x1, f.y1, c);
    out[c] = (t00 * (1 - f.fx) + t10 * f.fx) * (1 - f.fy) +
             (t01 * (1 - f.fx) + t11 * f.fx) * f.fy;
  }
}

Vec2d sample_bilinear_backward(const Image& tex, Vec2d uv, WrapMode wrap,
    std::span<const double> grad_out, Image* grad_tex) {
  auto  f = footprint(tex, uv, wrap);
  Vec2d g_uv{};
  for (int c = 0; c < tex.channels; ++c) {
    auto g = grad_out[c];
    if (g == 0) continue;
    auto t00 = tex.at(f.x0, f.y0, c), t10 = tex.at(f.x1, f.y0, c);
    auto t01 = tex.at(f.x0, f.y1, c), t11 = tex.at(f.x1, f.y1, c);
    auto dfx = (t10 - t00) * (1 - f.fy) + (t11 - t01) * f.fy;
    auto dfy = (t01 - t00) * (1 - f.fx) + (t11 - t10) * f.fx;
    g_uv.x += g * dfx * tex.width;
    g_uv.y -= g * dfy * tex.height;
    if (grad_tex) {
      grad_tex->at(f.x0, f.y0, c) += g * (1 - f.fx) * (1 - f.fy);
      grad_tex->at(f.x1, f.y0, c) += g * f.fx * (1 - f.fy);
      grad_tex->at(f.x0, f.y1, c) += g * (1 - f.fx) * f.fy;
      grad_tex->at(f.x1, f.y1, c) += g * f.fx * f.fy;
    }
  }
  return g_uv;
}

namespace {

struct LevelBlend {
  int    l0, l1;
  double f;
};

LevelBlend level_blend(const TexturePyramid& p, double lod) {
  if (lod <= 0) return {0, 0, 0};
  auto top = static_cast<double>(p.level_count() - 1);
  if (lod >= top) return {p.level_count() - 1, p.level_count() - 1, 0};
  auto l0 = static_cast<int>(std::floor(lod));
  return {l0, l0 + 1, lod - l0};
}

}  // namespace

void texture_sample(const TexturePyramid& p, Vec2d uv, double lod,
    WrapMode wrap, std::span<double> out) {
  auto b = level_blend(p, lod);
  sample_bilinear(p.levels[b.l0], uv, wrap, out);
  if (b.f == 0) return;
  double hi[8];
  auto   c = p.channels();
  sample_bilinear(p.levels[b.l1], uv, wrap, std::span<double>(hi, c));
  for (int i = 0; i < c; ++i) out[i] = out[i] * (1 - b.f) + hi[i] * b.f;
}

Vec2d texture_sample_backward(const TexturePyramid& p, Vec2d uv, double lod,
    WrapMode wrap, std::span<const double> grad_out, TexturePyramid* grad) {
  auto b = level_blend(p, lod);
  if (b.f == 0)
    return sample_bilinear_backward(
        p.levels[b.l0], uv, wrap, grad_out, grad ? &grad->levels[b.l0] : nullptr);
  double g0[8], g1[8];
  auto   c = p.channels();
  for (int i = 0; i < c; ++i) {
    g0[i] = grad_out[i] * (1 - b.f);
    g1[i] = grad_out[i] * b.f;
  }
  auto a = sample_bilinear_backward(p.levels[b.l0], uv, wrap,
      std::span<const double>(g0, c), grad ? &grad->levels[b.l0] : nullptr);
  auto d = sample_bilinear_backward(p.levels[b.l1], uv, wrap,
      std::span<const double>(g1, c), grad ? &grad->levels[b.l1] : nullptr);
  return a + d;
}

Image texture_sample(const TexturePyramid& p, std::span<const Vec2d> uvs,
    std::span<const double> lods, WrapMode wrap) {
  Image out(static_cast<int>(uvs.size()), 1, p.channels());
  for (std::size_t i = 0; i < uvs.size(); ++i)
    texture_sample(p, uvs[i], lods.empty() ? -1.0 : lods[i], wrap,
        std::span<double>(&out.data[i * p.channels()], p.channels()));
  return out;
}

}  // namespace apfit
