#include <benchmark/benchmark.h>

#include <dwiratio/dft.hpp>
#include <dwiratio/diffusion.hpp>
#include <dwiratio/losses.hpp>
#include <dwiratio/network.hpp>
#include <dwiratio/phantom.hpp>
#include <dwiratio/random.hpp>

#include <vector>

namespace {

using namespace dwiratio;

Image2D random_image(PhiloxStream& rng, std::size_t n, double lo, double hi) {
  Image2D img(n, n);
  for (auto& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

void BM_Dft2d(benchmark::State& state) {
  PhiloxStream rng(1, 0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto img = random_image(rng, n, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(dft2d(img));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_Dft2d)->Arg(32)->Arg(64)->Arg(128);

void BM_FftLoss(benchmark::State& state) {
  PhiloxStream rng(2, 0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pred = random_image(rng, n, 0.0, 1.0);
  const auto gt = random_image(rng, n, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(fft_loss(pred, gt));
}
BENCHMARK(BM_FftLoss)->Arg(32)->Arg(64);

void BM_TotalLoss(benchmark::State& state) {
  PhiloxStream rng(3, 0);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto pred = random_image(rng, n, 0.05, 1.0);
  const auto gt = random_image(rng, n, 0.05, 1.0);
  const auto b0 = random_image(rng, n, 0.5, 1.5);
  for (auto _ : state) benchmark::DoNotOptimize(total_loss(pred, gt, b0, LossWeights{}));
}
BENCHMARK(BM_TotalLoss)->Arg(32)->Arg(64);

// One optimizer-sized batch: 16 slices of 32x32.
void BM_NetworkForwardBackward(benchmark::State& state) {
  PhiloxStream rng(4, 0);
  const auto params = init_network(7);
  std::vector<Image2D> inputs, grads;
  for (int i = 0; i < 16; ++i) {
    inputs.push_back(random_image(rng, 32, 0.0, 1.0));
    grads.push_back(random_image(rng, 32, -1.0, 1.0));
  }
  std::vector<const Image2D*> ptrs;
  for (const auto& img : inputs) ptrs.push_back(&img);
  for (auto _ : state) {
    auto fwd = forward_batch(params, ptrs);
    benchmark::DoNotOptimize(backward(params, fwd.cache, grads));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_NetworkForwardBackward)->Unit(benchmark::kMillisecond);

void BM_NetworkPredict(benchmark::State& state) {
  PhiloxStream rng(5, 0);
  const auto params = init_network(7);
  const auto img = random_image(rng, 32, 0.0, 1.0);
  const Image2D* ptr = &img;
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(params, std::span(&ptr, 1)));
}
BENCHMARK(BM_NetworkPredict)->Unit(benchmark::kMicrosecond);

void BM_FitTensor(benchmark::State& state) {
  const auto scheme = make_even_scheme(static_cast<std::size_t>(state.range(0)), 1000.0, 3);
  const auto d = DiffusionTensor::axially_symmetric(1.7e-3, 0.3e-3, scheme[0].dir);
  const auto signals = synthesize_signals(d, 1.0, scheme);
  for (auto _ : state) benchmark::DoNotOptimize(fit_tensor(signals, 1.0, scheme));
}
BENCHMARK(BM_FitTensor)->Arg(6)->Arg(45);

void BM_RenderDwis(benchmark::State& state) {
  PhantomSpec spec;
  spec.dims = {32, 32, 16};
  const auto field = generate_phantom(spec, 1);
  const AcquisitionSpec acq(make_even_scheme(45, 1000.0, 3), NoiseModel::Rician, 0.02);
  for (auto _ : state) benchmark::DoNotOptimize(render_dwis(field, acq, 2));
}
BENCHMARK(BM_RenderDwis)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
