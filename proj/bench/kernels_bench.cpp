// Parallel kernels against the serial reference on IkshanaNet-sized shapes.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ikshana/kernels.hpp"

namespace k = ikshana::kernels;

namespace {

std::vector<float> random_values(std::size_t n) {
  std::mt19937 gen(7);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const auto a = random_values(n * n);
  const auto b = random_values(n * n);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::gemm<float>(false, false, n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    } else {
      k::reference::gemm<float>(false, false, n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

// One glance of the first scale: 35 -> 32 channels, 3x3, at 64x128.
k::ConvGeometry glance(std::int64_t dilation) {
  k::ConvGeometry g;
  g.in_channels = 35;
  g.out_channels = 32;
  g.in_h = 64;
  g.in_w = 128;
  g.kernel = 3;
  g.dilation = dilation;
  g.padding = dilation;
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const k::ConvGeometry g = glance(state.range(0));
  const auto x = random_values(g.batch * g.in_channels * g.in_h * g.in_w);
  const auto w = random_values(g.out_channels * g.patch_size());
  const auto bias = random_values(g.out_channels);
  std::vector<float> y(g.batch * g.out_channels * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_forward<float>(g, x.data(), w.data(), bias.data(), y.data());
    } else {
      k::reference::conv2d_forward<float>(g, x.data(), w.data(), bias.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["GMAC/s"] = benchmark::Counter(static_cast<double>(y.size()) * g.patch_size(),
                                                benchmark::Counter::kIsIterationInvariantRate,
                                                benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const k::ConvGeometry g = glance(state.range(0));
  const auto x = random_values(g.batch * g.in_channels * g.in_h * g.in_w);
  const auto w = random_values(g.out_channels * g.patch_size());
  const auto gy = random_values(g.batch * g.out_channels * g.out_h() * g.out_w());
  std::vector<float> gx(x.size()), gw(w.size()), gb(g.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_backward_input<float>(g, gy.data(), w.data(), gx.data());
      k::parallel::conv2d_backward_weight<float>(g, x.data(), gy.data(), gw.data(), gb.data());
    } else {
      k::reference::conv2d_backward_input<float>(g, gy.data(), w.data(), gx.data());
      k::reference::conv2d_backward_weight<float>(g, x.data(), gy.data(), gw.data(), gb.data());
    }
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

// Decoder upsample of 20 class maps from 1/4 to full resolution.
template <bool Parallel>
void BM_Bilinear(benchmark::State& state) {
  k::ResizeGeometry g{20, 128, 256, 512, 1024};
  const auto x = random_values(g.planes * g.in_h * g.in_w);
  std::vector<float> y(g.planes * g.out_h * g.out_w);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::bilinear_forward<float>(g, x.data(), y.data());
    } else {
      k::reference::bilinear_forward<float>(g, x.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

// Scale handoff: 96 channels at 256x512.
template <bool Parallel>
void BM_AvgPool(benchmark::State& state) {
  const std::int64_t planes = 96, h = 256, w = 512;
  const auto x = random_values(planes * h * w);
  std::vector<float> y(planes * (h / 2) * (w / 2));
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::avgpool2x2_forward<float>(planes, h, w, x.data(), y.data());
    } else {
      k::reference::avgpool2x2_forward<float>(planes, h, w, x.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->DenseRange(1, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->DenseRange(1, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bilinear<false>)->Name("bilinear/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bilinear<true>)->Name("bilinear/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AvgPool<false>)->Name("avgpool/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AvgPool<true>)->Name("avgpool/parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
