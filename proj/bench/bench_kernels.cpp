// Timings for the evidence combination, Labeler-Init batches, one full match
// and one self-location fix.

#include <benchmark/benchmark.h>

#include <random>

#include "pseiki/ds_core.hpp"
#include "pseiki/kernels.hpp"
#include "pseiki/scheduler.hpp"
#include "pseiki/self_location.hpp"
#include "pseiki/sim_world.hpp"

using namespace pseiki;

namespace {

const WorldFile& hallway() {
  static const WorldFile wf = load_world(std::string(PSEIKI_DATA_DIR) + "/hallway.world");
  return wf;
}

Blackboard hallway_board() {
  const auto& wf = hallway();
  PerceptionNoise n{0.1, 0.05, 2.0, 1.0, 3};
  const auto exp = render_expectation(*wf.model, Pose2(6, 0, 0), wf.camera);
  const auto per = synthesize_perception(*wf.model, Pose2(6.4, 0.3, 0.07), wf.camera, n);
  return make_blackboard(exp, per);
}

void bm_combine_pool(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<Label> labels;
  for (int i = 0; i < n; ++i) labels.push_back(Label{static_cast<std::uint32_t>(i + 1)});
  const FrameOfDiscernment frame(labels);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 0.45);
  std::vector<SimpleEvidenceFunction> pool;
  for (int i = 0; i < 2 * n; ++i) pool.push_back(SimpleEvidenceFunction::make(labels[i % n], u(rng), u(rng)));
  for (auto _ : state) benchmark::DoNotOptimize(combine_pool(pool, frame));
}
BENCHMARK(bm_combine_pool)->Arg(4)->Arg(16)->Arg(64);

void bm_labeler_init(benchmark::State& state) {
  const Blackboard bb = hallway_board();
  const auto& targets = bb.at(Panel::Data, Level::Edge);
  const int jobs = static_cast<int>(state.range(0));
  for (auto _ : state) {
    if (jobs == 1) {
      benchmark::DoNotOptimize(batch_labeler_init_serial(bb, targets, {}));
    } else {
      benchmark::DoNotOptimize(batch_labeler_init_parallel(bb, targets, {}, jobs));
    }
  }
}
BENCHMARK(bm_labeler_init)->Arg(1)->Arg(2);

void bm_match(benchmark::State& state) {
  for (auto _ : state) {
    Blackboard bb = hallway_board();
    benchmark::DoNotOptimize(run(bb, {}));
  }
}
BENCHMARK(bm_match);

void bm_self_locate(benchmark::State& state) {
  Blackboard bb = hallway_board();
  run(bb, {});
  const auto world = hallway().model->world_edges();
  const auto matches = extract_matches(bb, 0.5, world);
  for (auto _ : state) benchmark::DoNotOptimize(self_locate(matches, Pose2(6, 0, 0), hallway().camera));
}
BENCHMARK(bm_self_locate);

}  // namespace

BENCHMARK_MAIN();
