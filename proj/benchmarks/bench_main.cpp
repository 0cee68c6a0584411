#include <random>

#include <benchmark/benchmark.h>

#include "visfuse/config.hpp"
#include "visfuse/fragmenter.hpp"
#include "visfuse/pipeline.hpp"
#include "visfuse/sparsifier.hpp"
#include "visfuse/synthscene.hpp"

using namespace visfuse;

static void BM_TraverseRay(benchmark::State& state) {
  VoxelGridSpec spec;
  spec.origin = Vec3(-2, -2, -1);
  spec.voxel_size = 0.04;
  spec.dims = Index3(100, 100, 80);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Ray> rays;
  for (int i = 0; i < 256; ++i) {
    Ray r;
    r.origin = Vec3(u(rng), u(rng), 0.5 + u(rng));
    r.direction = Vec3(u(rng), u(rng), u(rng)).normalized();
    r.t_max = 3.0;
    rays.push_back(r);
  }
  std::vector<RaySpan> out;
  std::size_t i = 0;
  for (auto _ : state) {
    traverse_ray(spec, rays[i++ % rays.size()], out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_TraverseRay);

static void BM_SelectWindow(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> occ(static_cast<std::size_t>(state.range(0)));
  for (float& v : occ) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(select_window(occ, 9));
}
BENCHMARK(BM_SelectWindow)->Arg(16)->Arg(64)->Arg(256);

// Coarse level of one "room" fragment: 16 cm voxels, 9 views, stride 1.
static void BM_CoarseFragment(benchmark::State& state) {
  const SceneDescription room = canonical_scene("room");
  const auto poses = room.trajectory.poses();
  std::vector<FrameRecord> frames;
  for (int i = 0; i < 9; ++i) {
    FrameRecord f;
    f.frame_id = i;
    f.intrinsics = room.intrinsics;
    f.pose = poses[static_cast<std::size_t>(i)];
    frames.push_back(f);
  }
  PipelineConfig cfg;
  cfg.voxel_size = {0.16, 0.08, 0.04};
  const Fragment frag = make_fragment(0, frames, cfg.layout());
  for (auto _ : state) {
    // Integrating a fragment runs all levels; the coarse time is reported
    // separately as a counter.
    Reconstructor recon(cfg, &room.scene);
    const FragmentLog& log = recon.integrate(frag);
    state.counters["coarse_ms"] = log.levels[0].ms;
  }
}
BENCHMARK(BM_CoarseFragment)->Unit(benchmark::kMillisecond)->Iterations(1);
BENCHMARK_MAIN();
