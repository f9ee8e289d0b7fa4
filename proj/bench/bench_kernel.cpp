// SPDX-License-Identifier: GPL-2.0-only
// Receiver kernel throughput: serial reference against the OpenMP kernel.
#include <benchmark/benchmark.h>

#include "cv2x/engine.hpp"

using namespace cv2x;

namespace {

EngineConfig bench_config(KernelKind kind, double density) {
  EngineConfig c;
  c.scenario.highway_length_m = 2000.0;
  c.scenario.density_vpk = density;
  c.scenario.sim_duration_s = 3600.0;
  c.scenario.warmup_s = 1.0;
  c.kernel = kind;
  return c;
}

void step_engine(benchmark::State& state, KernelKind kind) {
  const auto cfg = bench_config(kind, static_cast<double>(state.range(0)));
  const auto world = build_world(cfg);
  Engine e(world, cfg);
  for (int i = 0; i < 2000; ++i) e.step();
  for (auto _ : state) e.step();
  state.SetItemsProcessed(state.iterations());
  state.counters["vehicles"] = static_cast<double>(world.vehicles.size());
}

void BM_SerialKernel(benchmark::State& state) { step_engine(state, KernelKind::serial); }
void BM_OpenMpKernel(benchmark::State& state) { step_engine(state, KernelKind::openmp); }

}  // namespace

BENCHMARK(BM_SerialKernel)->Arg(125)->Arg(400)->Arg(800)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_OpenMpKernel)->Arg(125)->Arg(400)->Arg(800)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
