#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "spasvc/config.hpp"
#include "spasvc/ddsp.hpp"
#include "spasvc/diffusion.hpp"
#include "spasvc/losses.hpp"
#include "spasvc/mel.hpp"
#include "spasvc/pitch.hpp"

using namespace spasvc;

namespace {

std::vector<double> tone(int sample_rate, double seconds) {
  std::vector<double> x(static_cast<std::size_t>(sample_rate * seconds));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * std::sin(2.0 * M_PI * 220.0 * i / sample_rate);
  return x;
}

SvcConfig preset(int which) { return preset_config(which == 0 ? "desk" : "paper"); }

void BM_LogMel(benchmark::State& state) {
  const SvcConfig cfg = preset(static_cast<int>(state.range(0)));
  const MelAnalyzer analyzer(cfg.mel);
  const auto x = tone(cfg.mel.sample_rate, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(analyzer.log_mel(x));
  state.SetLabel(cfg.preset);
}
BENCHMARK(BM_LogMel)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EstimateF0(benchmark::State& state) {
  const SvcConfig cfg = preset(static_cast<int>(state.range(0)));
  const AudioClip clip{tone(cfg.f0.sample_rate, 2.0), cfg.f0.sample_rate, std::nullopt};
  for (auto _ : state) benchmark::DoNotOptimize(estimate_f0(clip, cfg.f0));
  state.SetLabel(cfg.preset);
}
BENCHMARK(BM_EstimateF0)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CombSub(benchmark::State& state) {
  const SvcConfig cfg = preset(static_cast<int>(state.range(0)));
  const int hop = cfg.ddsp.hop, frames = 2 * cfg.ddsp.sample_rate / hop;
  SynthParams p{ag::Mat::Constant(frames, 1, 1.0), ag::Mat::Ones(frames, hop + 1),
                ag::Mat::Constant(frames, hop + 1, 0.01)};
  const auto f0 = F0Contour::constant(static_cast<std::size_t>(frames), 220.0);
  for (auto _ : state) benchmark::DoNotOptimize(combsub_synthesize(p, f0, hop, cfg.ddsp.sample_rate, 1));
  state.SetLabel(cfg.preset);
}
BENCHMARK(BM_CombSub)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SsimLossGrad(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ag::Mat a(128, 128), b(128, 128);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = u(rng);
    b.data()[i] = u(rng);
  }
  const SsimConfig cfg;
  for (auto _ : state) {
    ag::Var y = ag::parameter(b);
    ag::backward(cyc_loss_var(ag::constant(a), y, cfg));
    benchmark::DoNotOptimize(y.grad());
  }
}
BENCHMARK(BM_SsimLossGrad)->Unit(benchmark::kMillisecond);

void BM_DenoiserStep(benchmark::State& state) {
  const SvcConfig cfg = preset(static_cast<int>(state.range(0)));
  nn::ParameterStore store;
  std::mt19937_64 rng(3);
  const Denoiser net(cfg.denoiser, store, rng);
  const int frames = 128;
  const ag::Mat x = ag::Mat::Random(frames, cfg.denoiser.in_dim);
  const ag::Mat cond = ag::Mat::Random(frames, cfg.denoiser.cond_dim);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x, 500, cond));
  state.SetLabel(cfg.preset);
}
BENCHMARK(BM_DenoiserStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ShallowSampling(benchmark::State& state) {
  const SvcConfig cfg = preset(0);
  nn::ParameterStore store;
  std::mt19937_64 rng(4);
  const Denoiser net(cfg.denoiser, store, rng);
  const DiffusionSchedule sched = cfg.schedule();
  const int frames = 128;
  const ag::Mat init = (ag::Mat::Random(frames, cfg.denoiser.in_dim).array() * 0.5 + 0.5).matrix();
  const ag::Mat cond = ag::Mat::Random(frames, cfg.denoiser.cond_dim);
  for (auto _ : state)
    benchmark::DoNotOptimize(sample_shallow(net, init, cond, static_cast<int>(state.range(0)), sched, 1));
}
BENCHMARK(BM_ShallowSampling)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
