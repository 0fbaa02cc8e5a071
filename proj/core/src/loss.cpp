#include "apfit/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "apfit/shading.hpp"

namespace apfit {

namespace {

void check_shapes(const Image& img, const Image& ref) {
  if (!img.same_shape(ref) || img.data.empty())
    throw std::invalid_argument("loss: image shapes differ");
}

}  // namespace

double l1_tonemapped(const Image& img, const Image& ref, Image* grad, double scale) {
  check_shapes(img, ref);
  auto   n   = static_cast<double>(img.data.size());
  double sum = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    if (img.data[i] < 0 || ref.data[i] < 0)
      throw std::invalid_argument("l1_tonemapped: negative radiance");
    auto d = tone_map(img.data[i]) - tone_map(ref.data[i]);
    sum += std::abs(d);
    if (grad && d != 0)
      grad->data[i] += scale * (d > 0 ? 1.0 : -1.0) * tone_map_derivative(img.data[i]) / n;
  }
  return sum / n;
}

double mse(const Image& img, const Image& ref, Image* grad, double scale) {
  check_shapes(img, ref);
  auto   n   = static_cast<double>(img.data.size());
  double sum = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    auto d = img.data[i] - ref.data[i];
    sum += d * d;
    if (grad) grad->data[i] += scale * 2 * d / n;
  }
  return sum / n;
}

double image_loss(LossKind kind, const Image& img, const Image& ref, Image* grad, double scale) {
  return kind == LossKind::mse ? mse(img, ref, grad, scale)
                               : l1_tonemapped(img, ref, grad, scale);
}

double objective(double image_loss, double laplacian_loss, const ScheduleState& s) {
  return image_loss + s.lambda_current * laplacian_loss;
}

LambdaInit init_lambda(double image_loss, double laplacian_loss,
    std::optional<double> user_override) {
  double l0;
  if (user_override) {
    l0 = *user_override;
  } else {
    if (!(laplacian_loss > 0))
      throw std::invalid_argument(
          "initial Laplacian loss is zero; provide an explicit lambda");
    l0 = 0.25 * image_loss / laplacian_loss;
  }
  return {l0, 0.02 * l0};
}

ScheduleState make_schedule(LambdaInit lambda, double lr0) {
  ScheduleState s;
  s.lambda0        = lambda.lambda0;
  s.lambda_min     = lambda.lambda_min;
  s.lambda_current = lambda.lambda0;
  s.lr0            = lr0;
  return s;
}

double step_lambda(ScheduleState& s) {
  ++s.iteration;
  auto t           = static_cast<double>(s.iteration);
  s.lambda_current = (s.lambda_current - s.lambda_min) * std::pow(10.0, -s.k_lambda * t) +
                     s.lambda_min;
  return s.lambda_current;
}

double lr_at(std::uint64_t t, double lr0, double k) {
  return lr0 * std::pow(10.0, -k * static_cast<double>(t));
}

double psnr(const Image& img, const Image& ref, double peak) {
  auto m = mse(img, ref);
  if (m == 0) return psnr_identical;
  return 10 * std::log10(peak * peak / m);
}

double psnr_tonemapped(const Image& img, const Image& ref) {
  return psnr(tone_map(img), tone_map(ref), 1.0);
}

// --- chamfer -----------------------------------------------------------------

std::vector<Vec3d> sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed) {
  std::vector<double> cdf(mesh.faces.size());
  double              total = 0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    total += 0.5 * length(cross(mesh.positions[t[1]] - mesh.positions[t[0]],
                       mesh.positions[t[2]] - mesh.positions[t[0]]));
    cdf[f] = total;
  }
  if (!(total > 0)) throw std::invalid_argument("sample_surface: mesh has no area");
  std::mt19937_64                        rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3d>                     out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto r  = uni(rng) * total;
    auto f  = std::min<std::size_t>(
        std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin(), cdf.size() - 1);
    auto a = uni(rng), b = uni(rng);
    if (a + b > 1) {
      a = 1 - a;
      b = 1 - b;
    }
    const auto& t = mesh.faces[f];
    const auto& p0 = mesh.positions[t[0]];
    out.push_back(p0 + (mesh.positions[t[1]] - p0) * a + (mesh.positions[t[2]] - p0) * b);
  }
  return out;
}

namespace {

// Static 3-d tree over a point set for nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3d> points) : points_(points), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    build(0, order_.size(), 0);
  }

  double nearest_distance(const Vec3d& q) const {
    double best = std::numeric_limits<double>::infinity();
    search(q, 0, order_.size(), 0, best);
    return std::sqrt(best);
  }

 private:
  void build(std::size_t lo, std::size_t hi, int axis) {
    if (hi - lo <= 8) return;
    auto mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
        [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
    build(lo, mid, (axis + 1) % 3);
    build(mid + 1, hi, (axis + 1) % 3);
  }

  void search(const Vec3d& q, std::size_t lo, std::size_t hi, int axis, double& best) const {
    if (hi - lo <= 8) {
      for (auto i = lo; i < hi; ++i) best = std::min(best, length_squared(points_[order_[i]] - q));
      return;
    }
    auto        mid = lo + (hi - lo) / 2;
    const auto& p   = points_[order_[mid]];
    best            = std::min(best, length_squared(p - q));
    auto d          = q[axis] - p[axis];
    auto next       = (axis + 1) % 3;
    if (d < 0) {
      search(q, lo, mid, next, best);
      if (d * d < best) search(q, mid + 1, hi, next, best);
    } else {
      search(q, mid + 1, hi, next, best);
      if (d * d < best) search(q, lo, mid, next, best);
    }
  }

  std::span<const Vec3d>   points_;
  std::vector<std::size_t> order_;
};

}  // namespace

double chamfer_l1(const Mesh& a, const Mesh& b, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("chamfer_l1: sample count must be positive");
  auto   pa = sample_surface(a, count, seed);
  auto   pb = sample_surface(b, count, seed);
  KdTree ta(pa), tb(pb);
  double sum = 0;
  for (const auto& p : pa) sum += tb.nearest_distance(p);
  for (const auto& p : pb) sum += ta.nearest_distance(p);
  return sum / static_cast<double>(pa.size() + pb.size());
}

}  // namespace apfit
