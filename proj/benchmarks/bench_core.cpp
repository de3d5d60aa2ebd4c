// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "scenemem/gen/flow.hpp"
#include "scenemem/gen/model.hpp"
#include "scenemem/renderer.hpp"
#include "scenemem/retrieval.hpp"
#include "scenemem/scene_synth.hpp"
#include "scenemem/voxel_memory.hpp"

using namespace scenemem;

namespace {

PosedFrame scene_frame(int side) {
  const SceneSpec scene = generate_scene(11);
  const Intrinsics k = Intrinsics::from_fov(side, side, 70.0);
  GtFrame f = render_gt_static(scene, Pose::identity(), k);
  PosedFrame p;
  p.rgb = std::move(f.rgb);
  p.depth = std::move(f.depth);
  p.pose = Pose::identity();
  p.intrinsics = k;
  return p;
}

}  // namespace

static void BM_Fuse(benchmark::State& state) {
  const PosedFrame frame = scene_frame(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    SpatialMemory mem(0.05);
    mem.fuse(frame);
    benchmark::DoNotOptimize(mem.cell_count());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Fuse)->Arg(64)->Arg(128)->Arg(256);

static void BM_RenderProjection(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const PosedFrame frame = scene_frame(side);
  const PointCloud cloud = back_project_frame(frame);
  const Pose cam(Eigen::AngleAxisd(0.2, Vec3::UnitY()).toRotationMatrix(), Vec3(0.1, 0.0, 0.0));
  for (auto _ : state) benchmark::DoNotOptimize(render_projection(cloud, cam, frame.intrinsics));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(cloud.size()));
}
BENCHMARK(BM_RenderProjection)->Arg(64)->Arg(128)->Arg(256);

static void BM_VoxelIou(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  PointCloud a, b;
  for (int i = 0; i < state.range(0); ++i) {
    a.push_back(Vec3(u(rng), u(rng), u(rng)), Color::Zero());
    b.push_back(Vec3(u(rng), u(rng), u(rng)), Color::Zero());
  }
  for (auto _ : state) benchmark::DoNotOptimize(voxel_iou(a, b, 0.1));
}
BENCHMARK(BM_VoxelIou)->Arg(1000)->Arg(10000)->Arg(100000);

static void BM_ModelForward(benchmark::State& state) {
  gen::ModelConfig mc;
  mc.tokenizer = {8, 4, false, 32, 32};
  mc.blocks = 4;
  mc.dim = static_cast<int>(state.range(0));
  mc.max_frames = 16;
  const gen::Model model(mc);
  std::mt19937_64 rng(5);
  const int tpf = mc.tokenizer.tokens_per_frame(), c = mc.tokenizer.channels();
  gen::Conditioning cond;
  cond.refs = gen::standard_normal(3 * tpf, c, rng);
  cond.preceding = gen::standard_normal(4 * tpf, c, rng);
  cond.scene_p = gen::standard_normal(4 * tpf, c, rng);
  cond.scene_t = gen::standard_normal(8 * tpf, c, rng);
  const gen::Mat x = gen::standard_normal(8 * tpf, c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(cond, x, 0.5));
}
BENCHMARK(BM_ModelForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
