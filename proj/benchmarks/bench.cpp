#include <benchmark/benchmark.h>

#include "trailermatch/dataio.hpp"
#include "trailermatch/pipeline.hpp"
#include "trailermatch/sinkhorn.hpp"
#include "trailermatch/trainer.hpp"

using namespace trailermatch;

namespace {

Mat random_cost(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform();
  return m;
}

void BM_SinkhornLogDomain(benchmark::State& state) {
  const Index n = state.range(0);
  const CostMatrix cost(random_cost(n, n / 2, 42));
  SinkhornConfig cfg;
  cfg.lambda = 0.1;
  cfg.max_iter = 10000;
  const Marginal mu = Marginal::uniform(n);
  const Marginal gamma = Marginal::uniform(n / 2);
  for (auto _ : state) {
    auto result = sinkhorn(cost, mu, gamma, cfg);
    benchmark::DoNotOptimize(result.plan.values.data());
  }
}
BENCHMARK(BM_SinkhornLogDomain)->Arg(20)->Arg(50)->Arg(100);

void BM_SinkhornMultiplicative(benchmark::State& state) {
  const Index n = state.range(0);
  const CostMatrix cost(random_cost(n, n / 2, 42));
  SinkhornConfig cfg;
  cfg.lambda = 0.1;
  cfg.max_iter = 10000;
  cfg.log_domain = false;
  const Marginal mu = Marginal::uniform(n);
  const Marginal gamma = Marginal::uniform(n / 2);
  for (auto _ : state) {
    auto result = sinkhorn(cost, mu, gamma, cfg);
    benchmark::DoNotOptimize(result.plan.values.data());
  }
}
BENCHMARK(BM_SinkhornMultiplicative)->Arg(20)->Arg(50)->Arg(100);

void BM_EncodeForward(benchmark::State& state) {
  const Index shots = state.range(0);
  const SynthResult synth = synth_gen(shots, shots / 4, 16, 0.05, 7);
  const ModelParams params = init_params(16, 2, 7);
  for (auto _ : state) {
    ad::Tape tape;
    auto trace = encode(tape, synth.pair.movie, synth.pair.music, params, false);
    benchmark::DoNotOptimize(trace.select_probs.value().data());
  }
}
BENCHMARK(BM_EncodeForward)->Arg(40)->Arg(120);

void BM_TrainStep(benchmark::State& state) {
  const SynthResult synth = synth_gen(40, 10, 16, 0.05, 11);
  ModelParams params = init_params(16, 2, 11);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  AdamState adam = AdamState::init(params);
  for (auto _ : state) {
    auto parts = ipot_step({&synth.pair}, params, cfg, adam);
    benchmark::DoNotOptimize(parts.total);
  }
}
BENCHMARK(BM_TrainStep);

void BM_Generate(benchmark::State& state) {
  const SynthResult synth = synth_gen(40, 10, 16, 0.05, 13);
  const ShotDurations durations{synth.pair.movie_durations, synth.pair.music_durations};
  const ModelParams params = init_params(16, 2, 13);
  for (auto _ : state) {
    auto edl = generate(synth.pair.movie, synth.pair.music, durations, params, {});
    benchmark::DoNotOptimize(edl.entries.data());
  }
}
BENCHMARK(BM_Generate);

}  // namespace

BENCHMARK_MAIN();
