// Serial reference kernels against their OpenMP counterparts at U-Net
// layer sizes, plus one full training step.

#include <cstdint>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "griduq/kernels/geometry.hpp"
#include "griduq/kernels/parallel.hpp"
#include "griduq/kernels/reference.hpp"
#include "griduq/train.hpp"

namespace {

using namespace griduq;
namespace kr = griduq::kernels::reference;
namespace kp = griduq::kernels::parallel;

struct ConvFixture {
  kernels::Conv2dGeometry g;
  std::vector<float> x, w, b, y, gy, gx, gw, gb;

  ConvFixture(std::int64_t batch, std::int64_t cin, std::int64_t cout, std::int64_t h, std::int64_t wd) {
    auto i = [](std::int64_t v) { return static_cast<int>(v); };
    g = kernels::conv2d_geometry({i(batch), i(cin), i(h), i(wd)}, {i(cout), i(cin), 3, 3}, 1, 1);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-1, 1);
    auto fill = [&](std::vector<float>& v, std::size_t n) {
      v.resize(n);
      for (auto& e : v) e = u(rng);
    };
    fill(x, g.input_size());
    fill(w, g.weight_size());
    fill(b, static_cast<std::size_t>(cout));
    fill(gy, g.output_size());
    y.resize(g.output_size());
    gx.resize(g.input_size());
    gw.resize(g.weight_size());
    gb.resize(b.size());
  }
};

// Args: batch, in channels, out channels, height, width.
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 28, 8, 32, 52})->Args({8, 16, 16, 16, 26})->Args({8, 32, 32, 8, 13})->Args({1, 28, 32, 32, 56});
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvFixture f(state.range(0), state.range(1), state.range(2), state.range(3), state.range(4));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kp::conv2d_forward<float>(f.g, f.x, f.w, f.b, f.y);
    } else {
      kr::conv2d_forward<float>(f.g, f.x, f.w, f.b, f.y);
    }
    benchmark::DoNotOptimize(f.y.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardInput(benchmark::State& state) {
  ConvFixture f(state.range(0), state.range(1), state.range(2), state.range(3), state.range(4));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kp::conv2d_backward_input<float>(f.g, f.gy, f.w, f.gx);
    } else {
      kr::conv2d_backward_input<float>(f.g, f.gy, f.w, f.gx);
    }
    benchmark::DoNotOptimize(f.gx.data());
  }
}

template <bool Parallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  ConvFixture f(state.range(0), state.range(1), state.range(2), state.range(3), state.range(4));
  for (auto _ : state) {
    if constexpr (Parallel) {
      kp::conv2d_backward_weight<float>(f.g, f.x, f.gy, f.gw, f.gb);
    } else {
      kr::conv2d_backward_weight<float>(f.g, f.x, f.gy, f.gw, f.gb);
    }
    benchmark::DoNotOptimize(f.gw.data());
  }
}

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<false>)
    ->Name("conv_backward_input/reference")
    ->Apply(conv_args)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<true>)
    ->Name("conv_backward_input/parallel")
    ->Apply(conv_args)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<false>)
    ->Name("conv_backward_weight/reference")
    ->Apply(conv_args)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<true>)
    ->Name("conv_backward_weight/parallel")
    ->Apply(conv_args)
    ->Unit(benchmark::kMillisecond);

// Args: batch, channels, height, width.
template <bool Parallel>
void BM_MaxPool(benchmark::State& state) {
  const auto g = kernels::pool_geometry({static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
                                         static_cast<int>(state.range(2)), static_cast<int>(state.range(3))},
                                        2);
  std::vector<float> x(g.input_size()), y(g.output_size());
  std::vector<int> argmax(g.output_size());
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& e : x) e = u(rng);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kp::maxpool2d_forward<float>(g, x, y, argmax);
    } else {
      kr::maxpool2d_forward<float>(g, x, y, argmax);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(BM_MaxPool<false>)->Name("maxpool/reference")->Args({8, 8, 32, 52})->Args({8, 32, 16, 26});
BENCHMARK(BM_MaxPool<true>)->Name("maxpool/parallel")->Args({8, 8, 32, 52})->Args({8, 32, 16, 26});

// Args: base width, depth. One batch of 8 days on the 31x49 grid.
void BM_TrainingStep(benchmark::State& state) {
  SyntheticOptions o;
  o.region = RegionSpec::north_america();
  o.n_days = 8;
  o.noise = NoiseProfile::parse("hetero");
  o.station_density = 0.05;
  const Dataset d = generate_synthetic(o);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const auto batch = standardized(d.samples, idx, compute_channel_stats(d.samples, idx));
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 8;
  c.base_width = static_cast<int>(state.range(0));
  c.depth = static_cast<int>(state.range(1));
  auto params = build(c.model_config(28), 0);
  for (auto _ : state) fit(c, params, batch, {}, 0);
  state.counters["params"] = static_cast<double>(params.parameter_count());
}

BENCHMARK(BM_TrainingStep)->Args({8, 2})->Args({16, 2})->Args({32, 3})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
