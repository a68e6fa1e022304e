#include <benchmark/benchmark.h>

#include <random>

#include "transinv/archspec.hpp"
#include "transinv/sensitivity.hpp"

using namespace transinv;

namespace {

std::vector<data::Sample> samples(std::size_t count) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<data::Sample> out;
  for (std::size_t n = 0; n < count; ++n) {
    nn::Tensor<float> image({1, 40, 40});
    for (std::size_t i = 0; i < image.size(); ++i) image[i] = u(rng);
    out.push_back({std::move(image), 0});
  }
  return out;
}

// One sample across the full 21x21 shift grid, every map at once.
void BM_ProbeClass(benchmark::State& state) {
  const auto model = nn::Model<float>::he_initialized(arch::preset(static_cast<int>(state.range(0)), 5), 1);
  const auto probe = sens::model_probe(model);
  const auto batch = samples(1);
  for (auto _ : state) benchmark::DoNotOptimize(sens::probe_class(probe, batch));
  state.SetItemsProcessed(state.iterations() * 441);
}
BENCHMARK(BM_ProbeClass)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_CosineSimilarity(benchmark::State& state) {
  std::vector<float> a(static_cast<std::size_t>(state.range(0))), b(a.size());
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = n(rng);
    b[i] = n(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(sens::cosine_similarity(std::span<const float>(a), std::span<const float>(b)));
}
BENCHMARK(BM_CosineSimilarity)->Arg(10)->Arg(750);

void BM_RadialProfile(benchmark::State& state) {
  sens::SensitivityMap map(10, sens::Metric::cosine, nn::Tap::fc_out, 0);
  for (auto& v : map.values()) v = 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(sens::radial_profile(map));
}
BENCHMARK(BM_RadialProfile);

}  // namespace
