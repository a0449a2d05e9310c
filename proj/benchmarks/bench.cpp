#include "csmri/homology.hpp"
#include "csmri/kspace.hpp"
#include "csmri/layers.hpp"
#include "csmri/train.hpp"
#include "csmri/unet.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace csmri;

namespace {

template <typename Real>
BasicTensor<Real> noise(Shape s, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<Real> g;
  BasicTensor<Real> t(s);
  for (auto &v : t.values()) {
    v = g(rng);
  }
  return t;
}

// Args: channels in = out, image size, kernel.
void BM_Conv2d(benchmark::State &state)
{
  int const c = static_cast<int>(state.range(0));
  int const n = static_cast<int>(state.range(1));
  int const k = static_cast<int>(state.range(2));
  auto const x = noise<float>({3, c, n, n}, 1);
  auto const p = xavier_init<float>(k, k, c, c, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, p));
  }
  state.SetItemsProcessed(state.iterations() * 3LL * c * c * k * k * n * n);
}
BENCHMARK(BM_Conv2d)->Args({16, 64, 3})->Args({64, 16, 3})->Args({32, 32, 1})->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State &state)
{
  int const c = static_cast<int>(state.range(0));
  int const n = static_cast<int>(state.range(1));
  auto const x = noise<float>({3, c, n, n}, 1);
  auto const p = xavier_init<float>(3, 3, c, c, 2);
  auto const dy = noise<float>({3, c, n, n}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d_backward(x, p, dy));
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 64})->Args({64, 16})->Unit(benchmark::kMicrosecond);

void BM_BatchNormTrain(benchmark::State &state)
{
  int const c = static_cast<int>(state.range(0));
  int const n = static_cast<int>(state.range(1));
  auto const x = noise<float>({3, c, n, n}, 1);
  auto p = BNParams<float>::identity(c);
  for (auto _ : state) {
    benchmark::DoNotOptimize(batch_norm(x, p, BNMode::Train));
  }
}
BENCHMARK(BM_BatchNormTrain)->Args({16, 64})->Args({64, 16})->Unit(benchmark::kMicrosecond);

void BM_Dft2(benchmark::State &state)
{
  int const n = static_cast<int>(state.range(0));
  auto const img = make_phantom(n, n, 1, 3).front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(dft2(img));
  }
}
BENCHMARK(BM_Dft2)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Betti0(benchmark::State &state)
{
  int const n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  PointCloud pc{RealMatrix(n, 1024), "bench"};
  for (Index i = 0; i < pc.points.size(); i++) {
    pc.points.data()[i] = g(rng);
  }
  auto const d = pairwise_distances(pc);
  for (auto _ : state) {
    benchmark::DoNotOptimize(betti0_barcode(d));
  }
}
BENCHMARK(BM_Betti0)->Arg(60)->Arg(500)->Unit(benchmark::kMicrosecond);

void BM_PairwiseDistances(benchmark::State &state)
{
  int const n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  PointCloud pc{RealMatrix(n, 1024), "bench"};
  for (Index i = 0; i < pc.points.size(); i++) {
    pc.points.data()[i] = g(rng);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(pairwise_distances(pc));
  }
}
BENCHMARK(BM_PairwiseDistances)->Arg(60)->Arg(500)->Unit(benchmark::kMicrosecond);

NetworkSpec bench_spec(int mode)
{
  switch (mode) {
  case 0:
    return NetworkSpec::desk_scale();
  case 1:
    return NetworkSpec::single_scale(64, 16);
  default:
    return NetworkSpec::paper_scale();
  }
}

// Arg: 0 desk multi-scale, 1 desk single-scale, 2 paper scale (one 256 x 256 image).
void BM_NetworkForward(benchmark::State &state)
{
  auto const spec = bench_spec(static_cast<int>(state.range(0)));
  Network<float> net(spec, 1);
  int const batch = state.range(0) == 2 ? 1 : 3;
  auto const x = noise<float>({batch, 1, spec.input_h, spec.input_w}, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(x, BNMode::Infer));
  }
}
BENCHMARK(BM_NetworkForward)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

// One mini-batch of three: forward, loss, backward and momentum update.
void BM_TrainStep(benchmark::State &state)
{
  auto const spec = bench_spec(static_cast<int>(state.range(0)));
  Network<float> net(spec, 1);
  std::vector<TrainSample> batch;
  for (int i = 0; i < 3; i++) {
    auto const coil = make_phantom(spec.input_h, spec.input_w, 1, static_cast<std::uint64_t>(i)).front();
    RealArray const m = magnitude(coil.data);
    batch.push_back({m, RealArray(0.1 * m)});
  }
  SgdState<float> sgd;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_epoch(net, std::span<TrainSample const>(batch), sgd, 1e-3, seed++));
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
