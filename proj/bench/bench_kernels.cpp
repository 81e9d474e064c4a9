#include <benchmark/benchmark.h>

#include <vector>

#include "qp/analysis.hpp"
#include "qp/kernels.hpp"
#include "qp/model1d.hpp"
#include "qp/rng.hpp"
#include "qp/scene3d.hpp"

namespace {

using namespace qp;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Middle encoder stage: batch 64, 32 -> 32 channels over 17 samples.
const kernels::ConvDims kConv{64, 32, 32, 17};
const kernels::DenseDims kDense{8320, 64, 64};

template <auto Kernel>
void BM_ConvForward(benchmark::State& state) {
  const auto x = random_vector(kConv.batch * kConv.in_channels * kConv.length, 1);
  const auto w = random_vector(kConv.out_channels * kConv.in_channels * kernels::kConvWidth, 2);
  const auto b = random_vector(kConv.out_channels, 3);
  std::vector<double> y(kConv.batch * kConv.out_channels * kConv.length);
  for (auto _ : state) {
    Kernel(x, w, b, kConv, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ConvForward<kernels::conv1d_forward_reference>)->Name("conv1d_forward/reference");
BENCHMARK(BM_ConvForward<kernels::conv1d_forward>)->Name("conv1d_forward/fast");

template <auto Kernel>
void BM_ConvBackward(benchmark::State& state) {
  const auto x = random_vector(kConv.batch * kConv.in_channels * kConv.length, 1);
  const auto w = random_vector(kConv.out_channels * kConv.in_channels * kernels::kConvWidth, 2);
  const auto dy = random_vector(kConv.batch * kConv.out_channels * kConv.length, 3);
  std::vector<double> dx(x.size()), dw(w.size()), db(kConv.out_channels);
  for (auto _ : state) {
    Kernel(x, w, dy, kConv, dx, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}
BENCHMARK(BM_ConvBackward<kernels::conv1d_backward_reference>)->Name("conv1d_backward/reference");
BENCHMARK(BM_ConvBackward<kernels::conv1d_backward>)->Name("conv1d_backward/fast");

template <auto Kernel>
void BM_DenseForward(benchmark::State& state) {
  const auto x = random_vector(kDense.batch * kDense.in, 4);
  const auto w = random_vector(kDense.out * kDense.in, 5);
  const auto b = random_vector(kDense.out, 6);
  std::vector<double> y(kDense.batch * kDense.out);
  for (auto _ : state) {
    Kernel(x, w, b, kDense, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_DenseForward<kernels::dense_forward_reference>)->Name("dense_forward/reference");
BENCHMARK(BM_DenseForward<kernels::dense_forward>)->Name("dense_forward/fast");

template <auto Kernel>
void BM_DenseBackward(benchmark::State& state) {
  const auto x = random_vector(kDense.batch * kDense.in, 4);
  const auto w = random_vector(kDense.out * kDense.in, 5);
  const auto dy = random_vector(kDense.batch * kDense.out, 6);
  std::vector<double> dx(x.size()), dw(w.size()), db(kDense.out);
  for (auto _ : state) {
    Kernel(x, w, dy, kDense, dx, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}
BENCHMARK(BM_DenseBackward<kernels::dense_backward_reference>)->Name("dense_backward/reference");
BENCHMARK(BM_DenseBackward<kernels::dense_backward>)->Name("dense_backward/fast");

// One training step's worth of field queries: 64 crops × 65 samples × 2 branches.
void BM_NeuralFieldStep(benchmark::State& state) {
  NeuralField1D field(7, OutputAffine{0.0, 100.0});
  const auto theta = random_vector(8320, 8);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var y = field.forward(tape, tape.leaf(ad::Tensor(ad::Shape{theta.size()}, theta)));
    tape.backward(ad::mean(y));
  }
}
BENCHMARK(BM_NeuralFieldStep)->Unit(benchmark::kMillisecond);

void BM_EncoderStep(benchmark::State& state) {
  Encoder1D encoder(9);
  const auto crops = random_vector(64 * kCropLength, 10);
  for (auto _ : state) {
    ad::Tape tape;
    tape.backward(ad::mean(encoder.forward(tape, crops, 64)));
  }
}
BENCHMARK(BM_EncoderStep)->Unit(benchmark::kMillisecond);

// Arg: 0 serial, otherwise the OpenMP worker count.
void BM_RenderView(benchmark::State& state) {
  const SphereScene scene = SphereScene::reference(3);
  Camera cam;
  cam.pose = PoseSO3(0.7, 0.2, 0.0);
  const Exec exec = state.range(0) == 0 ? Exec::serial : Exec::parallel;
  if (exec == Exec::parallel) set_jobs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(render_view(scene, cam, kDefaultSamples, exec).planes.data());
  set_jobs(1);
}
BENCHMARK(BM_RenderView)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_SsmGrid(benchmark::State& state) {
  Camera cam;
  cam.resolution = 32;
  const SphereRenderer renderer(SphereScene::reference(2), cam);
  GridSpec grid;
  grid.azimuth_bins = 64;
  const Exec exec = state.range(0) == 0 ? Exec::serial : Exec::parallel;
  if (exec == Exec::parallel) set_jobs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ssm_grid(renderer, PoseSO3(0.3, 0.0, 0.0), grid, exec).values.data());
  set_jobs(1);
}
BENCHMARK(BM_SsmGrid)->Arg(0)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
