#include <benchmark/benchmark.h>

#include <vector>

#include "dermaug/kernels.hpp"
#include "dermaug/rng.hpp"

namespace {

using dermaug::kernels::ConvShape;

struct ConvData {
  ConvShape s;
  std::vector<double> input, weight, bias, output, dinput, dweight, dbias;
};

// Shapes of the three stages of the default network at batch 20.
ConvShape shape_for(int stage) {
  const int widths[] = {8, 16, 32};
  const int in = stage == 0 ? 3 : widths[stage - 1];
  const int side = 32 >> stage;
  return {20, in, widths[stage], side, side};
}

ConvData make(int stage) {
  ConvData d;
  d.s = shape_for(stage);
  dermaug::RngStream rng(7, static_cast<std::uint64_t>(stage));
  auto fill = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  };
  fill(d.input, d.s.input_size());
  fill(d.weight, d.s.weight_size());
  fill(d.bias, static_cast<std::size_t>(d.s.out_channels));
  fill(d.output, d.s.output_size());
  d.dinput.resize(d.s.input_size());
  d.dweight.resize(d.s.weight_size());
  d.dbias.resize(static_cast<std::size_t>(d.s.out_channels));
  return d;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  auto d = make(static_cast<int>(state.range(0)));
  std::vector<double> out(d.s.output_size());
  for (auto _ : state) {
    if constexpr (Parallel)
      dermaug::kernels::conv3x3_forward(d.s, d.input, d.weight, d.bias, out);
    else
      dermaug::kernels::reference::conv3x3_forward(d.s, d.input, d.weight, d.bias, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["threads"] = dermaug::kernels::max_threads();
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  auto d = make(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    if constexpr (Parallel)
      dermaug::kernels::conv3x3_backward(d.s, d.input, d.weight, d.output, d.dinput, d.dweight, d.dbias);
    else
      dermaug::kernels::reference::conv3x3_backward(d.s, d.input, d.weight, d.output, d.dinput, d.dweight,
                                                    d.dbias);
    benchmark::DoNotOptimize(d.dweight.data());
  }
  state.counters["threads"] = dermaug::kernels::max_threads();
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->DenseRange(0, 2);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/openmp")->DenseRange(0, 2);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->DenseRange(0, 2);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/openmp")->DenseRange(0, 2);

BENCHMARK_MAIN();
