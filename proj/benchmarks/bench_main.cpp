#include <random>

#include <benchmark/benchmark.h>

#include "lensforge/depth_sim.hpp"
#include "lensforge/field.hpp"
#include "lensforge/lens.hpp"
#include "lensforge/psf.hpp"
#include "lensforge/psflib.hpp"
#include "lensforge/raytrace.hpp"
#include "lensforge/sensor.hpp"

namespace {

using namespace lensforge;

const char* const kLensIds[] = {"MOS-S1", "MOS-S2", "DoubleGauss", "6P"};

void BM_TraceMarginalRay(benchmark::State& state) {
  const LensPrescription lens = bundled_lens(kLensIds[state.range(0)]);
  const PreparedLens prepared(lens, kLambdaD);
  const ObjectPoint object = object_at_normalized_field(lens, 0.7, std::numeric_limits<double>::infinity());
  const AimResult aim = aim_ray(prepared, object, Vec2(0.0, 0.5));
  for (auto _ : state) {
    benchmark::DoNotOptimize(prepared.trace(aim.ray));
  }
  state.SetLabel(lens.id);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_TraceMarginalRay)->DenseRange(0, 3);

void BM_TracePsfMono(benchmark::State& state) {
  const LensPrescription lens = bundled_lens("MOS-S1");
  const SensorSpec sensor = SensorSpec::for_lens(lens, 512, 768);
  TraceSettings settings;
  settings.pupil_samples = static_cast<int>(state.range(0));
  settings.k = 11;
  const ObjectPoint object = object_at_normalized_field(lens, 0.5, 2.0);
  std::size_t rays = 0;
  for (auto _ : state) {
    const auto result = trace_psf_mono(lens, object, kLambdaD, sensor, settings);
    rays += result.rays_launched;
    benchmark::DoNotOptimize(result.psf.data.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(rays));
}
BENCHMARK(BM_TracePsfMono)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

PsfLibrary uniform_library(int n_h, int n_w, int m, int k) {
  PsfLibrary lib("bench", n_h, n_w, m, k, inverse_uniform_depths(11));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t d = 0; d < lib.depth_count(); ++d) {
    for (int r = 0; r < n_h; ++r) {
      for (int c = 0; c < n_w; ++c) {
        PsfPatch p(k, 0.0);
        for (auto& v : p.data) v = u(rng);
        p.normalize();
        lib.set_patch(d, r, c, p);
      }
    }
  }
  return lib;
}

RgbImage noise_image(int h, int w) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RgbImage img(h, w);
  for (auto& v : img.data) v = u(rng);
  return img;
}

void BM_ConvolvePatchwise(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const PsfLibrary lib = uniform_library(8, 12, 64, k);
  const RgbImage image = noise_image(512, 768);
  const KernelLookup lookup = [&](int row, int col) { return lib.patch(0, row, col); };
  for (auto _ : state) {
    benchmark::DoNotOptimize(convolve_patchwise(image, 64, k, lookup).data.data());
  }
  state.SetItemsProcessed(state.iterations() * 512 * 768);
}
BENCHMARK(BM_ConvolvePatchwise)->Arg(11)->Arg(21)->Unit(benchmark::kMillisecond);

void BM_SimulateAberration(benchmark::State& state) {
  const PsfLibrary lib = uniform_library(8, 12, 64, 11);
  const RgbImage image = noise_image(512, 768);
  DepthMap depth(512, 768);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) depth.at(y, x) = 0.7f + 0.01f * static_cast<float>(x);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_aberration(image, depth, lib).data.data());
  }
  state.SetItemsProcessed(state.iterations() * 512 * 768);
}
BENCHMARK(BM_SimulateAberration)->Unit(benchmark::kMillisecond);

void BM_FieldForwardBatch(benchmark::State& state) {
  FieldConfig config = FieldConfig::desk(1);
  config.hidden_layers = static_cast<int>(state.range(0));
  const FieldModel model(config, 1);
  const int batch = 96;
  std::vector<FieldInput> inputs(batch);
  for (int i = 0; i < batch; ++i) {
    inputs[i] = {normalize_patch_index(i % 8, 8), normalize_patch_index(i % 12, 12),
                 normalize_depth(config, 0.7 + 0.1 * i), 0.0};
  }
  const FieldModel::Matrix packed = pack_inputs(inputs);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.forward(packed).data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_FieldForwardBatch)->DenseRange(1, 5, 2);

}  // namespace

BENCHMARK_MAIN();
