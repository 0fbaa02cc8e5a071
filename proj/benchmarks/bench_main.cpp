#include <benchmark/benchmark.h>

#include "apfit/geometry.hpp"
#include "apfit/gradcheck.hpp"
#include "apfit/loss.hpp"
#include "apfit/optimize.hpp"
#include "apfit/rasterizer.hpp"
#include "apfit/reference.hpp"
#include "apfit/render.hpp"

using namespace apfit;

namespace {

Asset bench_sphere(int segments, int rings, double radius, bool learn) {
  auto  a = make_asset(make_uv_sphere(segments, rings, radius), learn);
  Image kd(1, 1, 4, 1.0);
  kd.at(0, 0, 0) = 0.7;
  set_texture(a, TextureKind::kd, kd, false);
  finalize(a);
  return a;
}

View bench_view(int size) { return make_toy_view(size, size); }

void BM_Rasterize(benchmark::State& state) {
  int  size = static_cast<int>(state.range(0));
  auto mesh = make_uv_sphere(64, 32);
  auto view = bench_view(size);
  auto proj = project(mesh.positions, view.camera.view_projection());
  for (auto _ : state) benchmark::DoNotOptimize(rasterize(proj, mesh.faces, size, size));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_Rasterize)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_MsaaRasterize(benchmark::State& state) {
  int  samples = static_cast<int>(state.range(0));
  auto mesh    = make_uv_sphere(64, 32);
  auto view    = bench_view(128);
  auto proj    = project(mesh.positions, view.camera.view_projection());
  for (auto _ : state) benchmark::DoNotOptimize(msaa_rasterize(proj, mesh.faces, 128, 128, samples));
}
BENCHMARK(BM_MsaaRasterize)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_RenderForward(benchmark::State& state) {
  int           size  = static_cast<int>(state.range(0));
  auto          asset = make_toy_asset();
  auto          view  = bench_view(size);
  RenderOptions o;
  o.width = o.height = size;
  for (auto _ : state) benchmark::DoNotOptimize(render(asset, view, o));
}
BENCHMARK(BM_RenderForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_RenderForwardBackward(benchmark::State& state) {
  int           size  = static_cast<int>(state.range(0));
  auto          asset = make_toy_asset();
  auto          view  = bench_view(size);
  RenderOptions o;
  o.width = o.height = size;
  Image ref(size, size, 3, 0.2);
  for (auto _ : state) {
    asset.params.zero_grads();
    auto  tape = render_forward(asset, view, o);
    Image grad(size, size, 3);
    image_loss(LossKind::l1_tonemapped, tape.color, ref, &grad, 1.0);
    render_backward(asset, tape, grad);
  }
}
BENCHMARK(BM_RenderForwardBackward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_DepthPeel(benchmark::State& state) {
  auto          asset = make_toy_asset();
  auto          view  = bench_view(128);
  RenderOptions o;
  o.width = o.height = 128;
  o.peel_passes      = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(render(asset, view, o));
}
BENCHMARK(BM_DepthPeel)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_LaplacianLossAndGradient(benchmark::State& state) {
  auto mesh = make_uv_sphere(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)) / 2);
  auto adj  = build_adjacency(mesh.vertex_count(), mesh.faces);
  std::vector<Vec3d> grad(mesh.vertex_count());
  for (auto _ : state) {
    benchmark::DoNotOptimize(laplacian_loss(mesh.positions, adj, {}));
    laplacian_loss_backward(mesh.positions, adj, {}, 1.0, grad);
  }
}
BENCHMARK(BM_LaplacianLossAndGradient)->Arg(32)->Arg(128);

void BM_FitIteration(benchmark::State& state) {
  InternalReference reference(bench_sphere(48, 24, 1.0, false), 1);
  FitConfig         cfg;
  cfg.width = cfg.height = 64;
  cfg.batch_size          = static_cast<int>(state.range(0));
  for (auto _ : state) {
    state.PauseTiming();
    auto latent    = bench_sphere(48, 24, 0.8, true);
    cfg.iterations = 1;
    state.ResumeTiming();
    benchmark::DoNotOptimize(fit(latent, reference, cfg));
  }
}
BENCHMARK(BM_FitIteration)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_GradcheckSuite(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(run_gradcheck("all"));
}
BENCHMARK(BM_GradcheckSuite)->Unit(benchmark::kMillisecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
