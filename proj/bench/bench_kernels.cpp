#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lgvae/kernels.hpp"

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

// Shapes of the decoder's hidden layer on one minibatch: (batch, width, width).
template <auto Kernel>
void BM_gemm_nn(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const auto n = static_cast<std::size_t>(state.range(2));
    const auto a = random_values(m * k, 1);
    const auto b = random_values(k * n, 2);
    std::vector<double> c(m * n);
    for (auto _ : state) {
        Kernel(a, b, c, m, k, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

template <auto Kernel>
void BM_gemm_tn(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const auto n = static_cast<std::size_t>(state.range(2));
    const auto a = random_values(k * m, 1);
    const auto b = random_values(k * n, 2);
    std::vector<double> c(m * n);
    for (auto _ : state) {
        Kernel(a, b, c, m, k, n, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

template <auto Kernel>
void BM_batched_square(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto side = static_cast<std::size_t>(state.range(1));
    const auto a = random_values(batch * side * side, 1);
    const auto b = random_values(batch * side * side, 2);
    std::vector<double> c(batch * side * side);
    for (auto _ : state) {
        Kernel(a, b, c, batch, side);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * side * side * side));
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
    b->Args({64, 256, 256})->Args({64, 16, 256})->Args({256, 64, 256})->Args({480, 256, 256});
}

void square_shapes(benchmark::internal::Benchmark* b) { b->Args({64, 4})->Args({1024, 4})->Args({256, 8}); }

}  // namespace

BENCHMARK(BM_gemm_nn<lgvae::kernels::gemm_nn>)->Name("gemm_nn/parallel")->Apply(gemm_shapes);
BENCHMARK(BM_gemm_nn<lgvae::kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Apply(gemm_shapes);
BENCHMARK(BM_gemm_tn<lgvae::kernels::gemm_tn>)->Name("gemm_tn/parallel")->Apply(gemm_shapes);
BENCHMARK(BM_gemm_tn<lgvae::kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Apply(gemm_shapes);
BENCHMARK(BM_batched_square<lgvae::kernels::batched_square_gemm>)->Name("batched_square/parallel")->Apply(square_shapes);
BENCHMARK(BM_batched_square<lgvae::kernels::serial::batched_square_gemm>)->Name("batched_square/serial")->Apply(square_shapes);

BENCHMARK_MAIN();
