#include <benchmark/benchmark.h>

#include "threshnet/cost_model.hpp"
#include "threshnet/engine.hpp"
#include "threshnet/training.hpp"

namespace threshnet {
namespace {

void BM_BlockTopology(benchmark::State& state) {
  const int layers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(BuildBlockTopology(layers, ConnectionMode::ThresholdBC(layers / 2)));
  }
}
BENCHMARK(BM_BlockTopology)->Arg(16)->Arg(64)->Arg(256);

void BM_BuildNetwork(benchmark::State& state) {
  const ArchConfig cfg = Preset(AllPresets()[static_cast<size_t>(state.range(0))]);
  state.SetLabel(cfg.name);
  for (auto _ : state) benchmark::DoNotOptimize(BuildNetwork(cfg));
}
BENCHMARK(BM_BuildNetwork)->DenseRange(0, 2);

void BM_Summarize(benchmark::State& state) {
  const NetworkGraph g = BuildNetwork(Preset(AllPresets()[static_cast<size_t>(state.range(0))]));
  state.SetLabel(g.name());
  for (auto _ : state) benchmark::DoNotOptimize(Summarize(g));
}
BENCHMARK(BM_Summarize)->DenseRange(0, 2);

void BM_ToyForward(benchmark::State& state) {
  const NetworkGraph g = BuildNetwork(ToyConfig());
  const ModelInstance m(g, 0);
  const Dataset data = MakeSyntheticDataset(8, 8, g.node(0).output_shape, 0);
  for (auto _ : state) benchmark::DoNotOptimize(Forward(m, data.inputs));
}
BENCHMARK(BM_ToyForward)->Unit(benchmark::kMillisecond);

void BM_ToyTrainStep(benchmark::State& state) {
  const NetworkGraph g = BuildNetwork(ToyConfig());
  ModelInstance m(g, 0);
  const Dataset data = MakeSyntheticDataset(8, 8, g.node(0).output_shape, 0);
  for (auto _ : state) benchmark::DoNotOptimize(TrainToy(m, data, 1, 0.01));
}
BENCHMARK(BM_ToyTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace threshnet

BENCHMARK_MAIN();
