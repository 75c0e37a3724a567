#include <benchmark/benchmark.h>

#include <random>

#include "gsdrag/codec.hpp"
#include "gsdrag/edit_run.hpp"
#include "gsdrag/knn.hpp"
#include "gsdrag/render.hpp"
#include "gsdrag/synthetic.hpp"
#include "gsdrag/triplane.hpp"

using namespace gsdrag;

namespace {

TwoBlobScene demo(std::size_t per_blob) {
  TwoBlobOptions o;
  o.per_blob = per_blob;
  return make_two_blob_scene(o);
}

void BM_RenderForward(benchmark::State& state) {
  const auto d = demo(static_cast<std::size_t>(state.range(0)));
  const int size = static_cast<int>(state.range(1));
  const Camera cam = orbit_cameras(1, 2.5, 2.0 * size, size, size).front();
  for (auto _ : state) benchmark::DoNotOptimize(render(d.scene, {}, cam).rgb.data.data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.scene.size()));
}
BENCHMARK(BM_RenderForward)->Args({1000, 64})->Args({1000, 128})->Args({5000, 128})->Unit(benchmark::kMillisecond);

void BM_RenderBackward(benchmark::State& state) {
  const auto d = demo(static_cast<std::size_t>(state.range(0)));
  const int size = static_cast<int>(state.range(1));
  const Camera cam = orbit_cameras(1, 2.5, 2.0 * size, size, size).front();
  RenderTape tape;
  render(d.scene, {}, cam, {}, &tape);
  Image upstream(size, size, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (auto& v : upstream.data) v = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(render_backward(tape, d.scene, {}, cam, upstream).shift.data());
}
BENCHMARK(BM_RenderBackward)->Args({1000, 64})->Args({1000, 128})->Unit(benchmark::kMillisecond);

void BM_Deform(benchmark::State& state) {
  const auto d = demo(static_cast<std::size_t>(state.range(0)));
  const DeformationModel model({}, d.scene.normalization_box(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.deform(d.scene).data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.scene.size()));
}
BENCHMARK(BM_Deform)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_DeformBackward(benchmark::State& state) {
  const auto d = demo(static_cast<std::size_t>(state.range(0)));
  const DeformationModel model({}, d.scene.normalization_box(), 1);
  DeformTape tape;
  model.deform(d.scene, &tape);
  const std::vector<Vec3> up(d.scene.size(), Vec3(0.1, -0.2, 0.3));
  ModelGradients g = model.zero_gradients();
  for (auto _ : state) {
    model.backward(tape, up, g);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_DeformBackward)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_SoftGroup(benchmark::State& state) {
  const auto d = demo(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_soft_group(d.scene, 16).data());
}
BENCHMARK(BM_SoftGroup)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_CodecRoundTrip(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const LatentCodec codec;
  Image img(size, size, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 17) / 17.0;
  for (auto _ : state) benchmark::DoNotOptimize(codec.decode(codec.encode(img)).data.data());
}
BENCHMARK(BM_CodecRoundTrip)->Arg(64)->Arg(256);

void BM_EditIteration(benchmark::State& state) {
  const auto d = demo(1000);
  const auto cams = orbit_cameras(12, 2.5, 130, 64, 64);
  EditSpec spec;
  spec.points = {{d.handle, d.handle + d.drag}};
  spec.hp.iterations = 1000000;
  spec.hp.stage1_fraction = state.range(0) ? 1e-6 : 1.0 - 1e-6;
  EditRun run(d.scene, cams, spec,
              std::make_shared<const SyntheticOracle>(SyntheticOracle::from_scene(d.target, cams)));
  for (auto _ : state) run.step();
}
BENCHMARK(BM_EditIteration)->Arg(0)->Arg(1)->ArgNames({"stage2"})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
