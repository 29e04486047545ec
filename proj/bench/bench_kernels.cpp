// Serial reference paths against the OpenMP-parallel kernels, and the fused
// GAN gradients against their per-sample graph references.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "rodenet/evaluator/evaluator.hpp"
#include "rodenet/gan/gan.hpp"
#include "rodenet/odenet/trainer.hpp"
#include "rodenet/parallel.hpp"
#include "rodenet/pipeline/pipeline.hpp"
#include "rodenet/simulator/simulator.hpp"
#include "rodenet/symnet/symnet.hpp"

using namespace rodenet;

namespace {

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::Parallel : Execution::Serial; }

gan::CriticBatch critic_batch(const gan::GanModel& m, std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  gan::CriticBatch b;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> r(m.data_dim()), f(m.data_dim());
    for (auto& v : r) v = normal(rng);
    for (auto& v : f) v = normal(rng);
    b.real.push_back(r);
    b.fake.push_back(f);
    b.eps.push_back(unit(rng));
  }
  return b;
}

std::vector<std::vector<double>> latents(std::size_t n, int dim) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> z(n, std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& v : z)
    for (auto& x : v) x = normal(rng);
  return z;
}

const sim::Dataset& dataset() {
  static const sim::Dataset ds = [] {
    sim::SimulationConfig sc;
    sc.instances = 16;
    sc.seed = 3;
    return sim::generate_dataset(sc);
  }();
  return ds;
}

void BM_CriticGradientFused(benchmark::State& state) {
  const auto m = gan::make_gan(72, {}, 1);
  const auto b = critic_batch(m, 64);
  for (auto _ : state) benchmark::DoNotOptimize(gan::critic_gradient(m, b, 10.0, mode(state)));
}
BENCHMARK(BM_CriticGradientFused)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CriticGradientGraph(benchmark::State& state) {
  const auto m = gan::make_gan(72, {}, 1);
  const auto b = critic_batch(m, 64);
  for (auto _ : state) benchmark::DoNotOptimize(gan::critic_gradient_reference(m, b, 10.0));
}
BENCHMARK(BM_CriticGradientGraph)->Unit(benchmark::kMillisecond);

void BM_GeneratorGradientFused(benchmark::State& state) {
  const auto m = gan::make_gan(72, {}, 1);
  const auto z = latents(64, m.latent_dim);
  for (auto _ : state) benchmark::DoNotOptimize(gan::generator_gradient(m, z, mode(state)));
}
BENCHMARK(BM_GeneratorGradientFused)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GeneratorGradientGraph(benchmark::State& state) {
  const auto m = gan::make_gan(72, {}, 1);
  const auto z = latents(64, m.latent_dim);
  for (auto _ : state) benchmark::DoNotOptimize(gan::generator_gradient_reference(m, z));
}
BENCHMARK(BM_GeneratorGradientGraph)->Unit(benchmark::kMillisecond);

// 20 Adam steps at the longest unroll for every instance.
void BM_OdeNetSweep(benchmark::State& state) {
  const auto& ds = dataset();
  odenet::TrainConfig cfg;
  for (auto _ : state) {
    std::vector<odenet::OdeNetTrainer> ts;
    for (std::size_t i = 0; i < ds.instances.size(); ++i)
      ts.emplace_back(symnet::SymNetShape(3, 2), ds.config.dt, cfg, make_rng(0, "bench", i));
    for_each_index(mode(state), ts.size(), [&](std::size_t i) { ts[i].run_steps(ds.observed(i), cfg.s_max, 20); });
    benchmark::DoNotOptimize(ts.back().xi().data());
  }
}
BENCHMARK(BM_OdeNetSweep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EvaluateRun(benchmark::State& state) {
  const auto& ds = dataset();
  const symnet::SymNetShape shape(3, 2);
  std::vector<std::vector<double>> xis;
  for (const auto& inst : ds.instances) xis.push_back(symnet::encode_system(eval::true_system(inst.eta), shape));
  eval::EvalOptions opt;
  for (auto _ : state) benchmark::DoNotOptimize(eval::evaluate_run("bench", xis, ds, shape, opt, mode(state)));
}
BENCHMARK(BM_EvaluateRun)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
