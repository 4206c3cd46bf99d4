#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dereverb/cost.hpp"
#include "dereverb/dsp.hpp"
#include "dereverb/prior.hpp"
#include "dereverb/reverb_operator.hpp"
#include "dereverb/sampler.hpp"
#include "dereverb/wpe.hpp"

namespace {

using namespace dereverb;

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 0.05);
  std::vector<double> x(n);
  for (auto& v : x) v = z(rng);
  return x;
}

reverb::OperatorConfig op_config(std::int64_t frames) {
  reverb::OperatorConfig cfg;
  cfg.n_frames = static_cast<std::size_t>(frames);
  return cfg;
}

void BM_Stft(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 1);
  const dsp::StftConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dsp::stft(x, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stft)->Arg(16000)->Arg(64000);

void BM_MinimumPhase(benchmark::State& state) {
  const auto h = noise(12416, 2);
  const auto over = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(dsp::minimum_phase(h, over));
}
BENCHMARK(BM_MinimumPhase)->Arg(1)->Arg(8);

void BM_AssembleRir(benchmark::State& state) {
  const auto cfg = op_config(state.range(0));
  const auto p = reverb::RirParams::initial(cfg, 3);
  for (auto _ : state) benchmark::DoNotOptimize(reverb::assemble_rir(p, cfg));
}
BENCHMARK(BM_AssembleRir)->Arg(32)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Apply(benchmark::State& state) {
  auto cfg = op_config(100);
  if (state.range(0) == 1) cfg.engine = reverb::Engine::subband;
  const auto rir = reverb::assemble_rir(reverb::RirParams::initial(cfg, 4), cfg);
  const auto x = noise(32000, 5);
  for (auto _ : state) benchmark::DoNotOptimize(reverb::apply(rir, x, cfg));
}
BENCHMARK(BM_Apply)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ApplyVjpFull(benchmark::State& state) {
  const auto cfg = op_config(100);
  const auto p = reverb::RirParams::initial(cfg, 6);
  const auto rir = reverb::assemble_rir(p, cfg);
  const auto x = noise(32000, 7);
  const auto ct = noise(reverb::output_length(cfg, x.size()), 8);
  for (auto _ : state) benchmark::DoNotOptimize(reverb::apply_vjp_full(p, rir, x, cfg, ct));
}
BENCHMARK(BM_ApplyVjpFull)->Unit(benchmark::kMillisecond);

void BM_SpectralCost(benchmark::State& state) {
  const auto y = noise(32000, 9);
  const auto u = noise(32000, 10);
  const SpectralCost cost(y, dsp::StftConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(cost.value_and_grad(u));
}
BENCHMARK(BM_SpectralCost)->Unit(benchmark::kMillisecond);

void BM_Wpe(benchmark::State& state) {
  const auto y = noise(16000, 11);
  wpe::WpeConfig cfg;
  cfg.taps = static_cast<std::size_t>(state.range(0));
  cfg.iterations = 1;
  for (auto _ : state) benchmark::DoNotOptimize(wpe::dereverb(y, cfg));
}
BENCHMARK(BM_Wpe)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_InformedStep(benchmark::State& state) {
  // Cost of a short informed run, reported per diffusion step.
  const prior::GaussianPrior model({}, 0.05 * 0.05, 0.05);
  const std::vector<double> h{1.0, 0.5, 0.25};
  const auto y = noise(16000, 12);
  sampler::SamplerConfig cfg;
  cfg.schedule.steps = 10;
  cfg.warm_start = false;
  for (auto _ : state) benchmark::DoNotOptimize(sampler::run_informed(y, h, model, cfg, 13));
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_InformedStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
