#include <benchmark/benchmark.h>

#include <random>

#include "transinv/archspec.hpp"
#include "transinv/layers.hpp"
#include "transinv/model.hpp"

using namespace transinv;

namespace {

nn::Tensor<float> noise(const nn::Shape& shape, std::uint64_t seed) {
  nn::Tensor<float> t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// First conv block of the MNIST presets: 1x40x40 in, 10 channels out.
void BM_ConvForward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const int pad = static_cast<int>(k - 1);
  auto layer = nn::make_conv<float>(1, 10, k, 1, pad / 2, pad - pad / 2);
  layer.kernels = noise(layer.kernels.shape(), 1);
  const auto x = noise({16, 1, 40, 40}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, layer));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ConvForward)->Arg(3)->Arg(4)->Arg(5);

void BM_ConvBackward(benchmark::State& state) {
  auto layer = nn::make_conv<float>(10, 20, 5, 1, 2, 2);
  layer.kernels = noise(layer.kernels.shape(), 3);
  const auto x = noise({16, 10, 20, 20}, 4);
  const auto g = noise({16, 20, 20, 20}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_backward(g, x, layer));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ConvBackward);

void BM_ModelForward(benchmark::State& state) {
  const auto spec = arch::preset(static_cast<int>(state.range(0)), 5);
  const auto model = nn::Model<float>::he_initialized(spec, 1);
  const auto& in = spec.input;
  const auto batch = static_cast<std::size_t>(state.range(1));
  const auto x = noise({batch, static_cast<std::size_t>(in.channels), static_cast<std::size_t>(in.height),
                        static_cast<std::size_t>(in.width)},
                       6);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ModelForward)->Args({1, 1})->Args({1, 21})->Args({3, 21})->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto model = nn::Model<float>::he_initialized(arch::preset(1, 5), 1);
  const auto x = noise({16, 1, 40, 40}, 7);
  std::vector<int> labels(16);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  for (auto _ : state) {
    nn::ForwardCache<float> cache;
    const auto logits = model.forward(x, &cache);
    const auto loss = nn::softmax_cross_entropy(logits, labels, labels.size());
    benchmark::DoNotOptimize(model.backward(cache, loss.grad));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
