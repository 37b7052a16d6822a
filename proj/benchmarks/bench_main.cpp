#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "capsense/array.hpp"
#include "capsense/dataset.hpp"
#include "capsense/netlab.hpp"

using namespace capsense;

namespace {

std::vector<double> uniform(std::size_t n, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> out(n);
  for (double& x : out) x = d(rng);
  return out;
}

void BM_MacEvaluate(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = uniform(n, 10.0, 70.0, rng);
  const auto v = uniform(n, -1.0, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mac_evaluate(c, v, 72.0));
}
BENCHMARK(BM_MacEvaluate)->Arg(9)->Arg(16);

void BM_MacEvaluateTraced(benchmark::State& state) {
  Rng rng(1);
  const auto c = uniform(9, 10.0, 70.0, rng);
  const auto v = uniform(9, -1.0, 1.0, rng);
  Trace trace;
  trace.reserve(36);
  for (auto _ : state) {
    trace.clear();
    TraceCapture cap{.out = &trace};
    benchmark::DoNotOptimize(mac_evaluate(c, v, 72.0, &cap));
  }
}
BENCHMARK(BM_MacEvaluateTraced);

void BM_FcForward(benchmark::State& state) {
  Rng rng(2);
  const SensorParams params;
  const auto topo = build_fc_array(3, 3, 4);
  Matrix w(4, 9);
  for (double& x : w.flat()) x = uniform(1, -1.0, 1.0, rng)[0];
  const Matrix img = encode_capacitive(letter(Glyph::kY, 3), params).c_i;
  for (auto _ : state) benchmark::DoNotOptimize(fc_forward(topo, img, w, params));
}
BENCHMARK(BM_FcForward);

void BM_ConvForward(benchmark::State& state) {
  Rng rng(3);
  const SensorParams params;
  const auto size = static_cast<std::size_t>(state.range(0));
  const auto topo = build_conv_array(size, size, 3);
  const auto sched = schedule_conv(size, size, 3);
  const auto k = uniform(9, -1.0, 1.0, rng);
  Matrix img(size, size);
  for (double& x : img.flat()) x = uniform(1, 16.77, 500.0, rng)[0];
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward(topo, sched, img, k, params));
}
BENCHMARK(BM_ConvForward)->Arg(5)->Arg(12);

void BM_FcTrainEpoch(benchmark::State& state) {
  const SensorParams params;
  TrainConfig cfg = TrainConfig::defaults(Architecture::kFcClassifier);
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_fc_classifier(cfg, params));
}
BENCHMARK(BM_FcTrainEpoch);

}  // namespace

BENCHMARK_MAIN();
