#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dlab/ad/ops.hpp"
#include "dlab/env/gridworld.hpp"
#include "dlab/eval/metrics.hpp"
#include "dlab/models/models.hpp"
#include "dlab/models/objectives.hpp"
#include "dlab/runtime.hpp"
#include "dlab/training/training.hpp"

using namespace dlab;

namespace {

ad::Tensor<float> random_images(std::size_t n, std::uint64_t seed) {
  const env::Gridworld gw(env::EnvConfig::for_scenario(env::Scenario::situation1));
  env::Rng rng(seed);
  std::vector<float> v(n * env::kImagePixels);
  for (std::size_t i = 0; i < n; ++i) gw.render_into(gw.random_state(rng), v.data() + i * env::kImagePixels);
  return ad::Tensor<float>({n, env::kImagePixels}, std::move(v));
}

void BM_EncodeImages(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = models::build_thomas<float>(models::kActions, 1);
  const auto x = random_images(n, 2);
  ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.net.encode(m.params, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_EncodeImages)->Arg(32)->Arg(2560)->Unit(benchmark::kMillisecond);

void BM_EncodeBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto m = models::build_thomas<float>(models::kActions, 1);
  const auto x = random_images(n, 2);
  for (auto _ : state) {
    m.params.zero_grad();
    ad::backward(ad::sum(m.net.encode(m.params, x)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_EncodeBackward)->Arg(32)->Arg(2560)->Unit(benchmark::kMillisecond);

void BM_Selectivity(benchmark::State& state) {
  const std::size_t B = 32, A = 4, N = 20, K = 4;
  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd;
  std::vector<float> z(B * K), zn(B * A * N * K), w(B * A * K, 0.25f);
  for (auto& v : z) v = nd(rng);
  for (auto& v : zn) v = nd(rng);
  const ad::Tensor<float> cur({B, K}, z, true), next({B * A * N, K}, zn, true);
  const ad::Tensor<float> weights({B * A, K}, w);
  for (auto _ : state) {
    const objectives::SelectivityBatch<float> batch{cur, next, weights, A, N};
    auto s = ad::sum(objectives::selectivity(batch));
    ad::backward(s);
    benchmark::DoNotOptimize(s.item());
  }
}
BENCHMARK(BM_Selectivity)->Unit(benchmark::kMicrosecond);

void BM_ThomasUpdate(benchmark::State& state) {
  training::TrainConfig c;
  c.kind = models::ModelKind::thomas;
  c.budget = 80 * 32;
  c.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(training::train(c).updates);
}
BENCHMARK(BM_ThomasUpdate)->Unit(benchmark::kMillisecond);

void BM_EnvStep(benchmark::State& state) {
  const env::Gridworld gw(env::EnvConfig::for_scenario(env::Scenario::situation2));
  auto s = gw.reset(4);
  std::size_t i = 0;
  for (auto _ : state) {
    s = gw.step(s, env::kAllActions[i++ % env::kNumActions]);
    benchmark::DoNotOptimize(s.anchors.data());
  }
}
BENCHMARK(BM_EnvStep);

void BM_AccumulatedDistance(benchmark::State& state) {
  const auto samples = eval::sample_states(env::EnvConfig::for_scenario(env::Scenario::situation1),
                                           static_cast<std::size_t>(state.range(0)), 5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  eval::Matrix z(samples.size(), 4);
  for (std::size_t i = 0; i < z.rows; ++i)
    for (std::size_t j = 0; j < 4; ++j) z(i, j) = nd(rng);
  const auto anchors = eval::anchor_lists(samples);
  for (auto _ : state) benchmark::DoNotOptimize(eval::accumulated_distance(z, anchors, 10).overall);
}
BENCHMARK(BM_AccumulatedDistance)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
}
