// Serial reference vs OpenMP kernels on the default toy shapes.

#include <benchmark/benchmark.h>

#include "scm/bench.hpp"
#include "scm/kernels.hpp"

using namespace scm;

namespace {

struct Setup {
  LatentDims dims{5, 8, 8, 8, 32};
  ToyModel model = build_toy_model(dims, 2, 6, 1);
  PriorSet priors;
  LatentTensor z;
  Setup() {
    Rng rng(2);
    priors = synth_priors(dims, CameraTrajectory::orbit(dims.views, 30.0), rng);
    z = LatentTensor(randn(rng, dims.shape()));
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

template <bool Serial>
void run(benchmark::State& state, auto&& body) {
  for (auto _ : state) {
    if constexpr (Serial) {
      SerialExecution scope;
      body();
    } else {
      body();
    }
  }
}

template <bool Serial>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor a = randn(rng, {n, n}), b = randn(rng, {n, n});
  run<Serial>(state, [&] { benchmark::DoNotOptimize(matmul(a, b)); });
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Serial>
void BM_SpatialAttention(benchmark::State& state) {
  const auto& s = setup();
  const auto& w = s.model.layers[0].chain;
  run<Serial>(state, [&] { benchmark::DoNotOptimize(spatial_forward(s.z, s.priors.spatial, w.spatial, w.heads)); });
}

template <bool Serial>
void BM_Chain(benchmark::State& state) {
  const auto& s = setup();
  run<Serial>(state, [&] { benchmark::DoNotOptimize(chain_forward(s.z, s.priors, s.model.layers[0].chain)); });
}

}  // namespace

BENCHMARK(BM_Matmul<true>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<false>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_SpatialAttention<true>)->Name("spatial_attention/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpatialAttention<false>)->Name("spatial_attention/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Chain<true>)->Name("chain/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Chain<false>)->Name("chain/parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
