// Fast kernels against the serial reference loops.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "polygen/evaluation.hpp"
#include "polygen/kernels.hpp"

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = d(rng);
  return v;
}

std::vector<polygen::Vec3> random_cloud(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<polygen::Vec3> p(static_cast<std::size_t>(n));
  for (auto& x : p) x = {u(rng), u(rng), u(rng)};
  return p;
}

template <bool kFast>
void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_floats(std::size_t(n) * n, 1), b = random_floats(std::size_t(n) * n, 2);
  std::vector<float> c(std::size_t(n) * n);
  for (auto _ : state) {
    if (kFast) {
      polygen::kernels::gemm<float>(false, true, n, n, n, 1.0f, a.data(), n, b.data(), n, 0.0f, c.data(), n);
    } else {
      polygen::reference::gemm<float>(false, true, n, n, n, 1.0f, a.data(), n, b.data(), n, 0.0f, c.data(), n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK_TEMPLATE(BM_Gemm, true)->Name("gemm/kernel")->Arg(64)->Arg(128)->Arg(512);
BENCHMARK_TEMPLATE(BM_Gemm, false)->Name("gemm/reference")->Arg(64)->Arg(128)->Arg(512);

template <bool kFast>
void BM_Softmax(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0)), cols = 257;
  const auto x = random_floats(std::size_t(rows) * cols, 3);
  std::vector<float> y;
  for (auto _ : state) {
    y = x;
    if (kFast) polygen::kernels::softmax_rows<float>(y.data(), rows, cols, cols);
    else polygen::reference::softmax_rows<float>(y.data(), rows, cols, cols);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK_TEMPLATE(BM_Softmax, true)->Name("softmax/kernel")->Arg(64)->Arg(2048);
BENCHMARK_TEMPLATE(BM_Softmax, false)->Name("softmax/reference")->Arg(64)->Arg(2048);

template <bool kFast>
void BM_LayerNorm(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0)), cols = 128;
  const auto x = random_floats(std::size_t(rows) * cols, 4);
  const std::vector<float> gain(cols, 1.0f), bias(cols, 0.0f);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    if (kFast) {
      polygen::kernels::layer_norm_rows<float>(x.data(), rows, cols, gain.data(), bias.data(), 1e-5f, y.data(),
                                               nullptr, nullptr);
    } else {
      polygen::reference::layer_norm_rows<float>(x.data(), rows, cols, gain.data(), bias.data(), 1e-5f,
                                                 y.data(), nullptr, nullptr);
    }
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK_TEMPLATE(BM_LayerNorm, true)->Name("layer_norm/kernel")->Arg(64)->Arg(2048);
BENCHMARK_TEMPLATE(BM_LayerNorm, false)->Name("layer_norm/reference")->Arg(64)->Arg(2048);

template <bool kFast>
void BM_Chamfer(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto p = random_cloud(n, 5), q = random_cloud(n, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kFast ? polygen::chamfer(p, q) : polygen::reference::chamfer(p, q));
  }
}
BENCHMARK_TEMPLATE(BM_Chamfer, true)->Name("chamfer/kernel")->Arg(500)->Arg(2500);
BENCHMARK_TEMPLATE(BM_Chamfer, false)->Name("chamfer/reference")->Arg(500)->Arg(2500);

}  // namespace

BENCHMARK_MAIN();
