#pragma once

// Dense inner loops shared by matcore and gradcore.
//
// The parallel kernels split work over output rows (or batch entries) only, so
// every output element is accumulated by a single thread in a fixed order and
// results do not depend on the thread count. The serial namespace holds plain
// triple-loop references used by the tests and the benchmark.

#include <cstddef>
#include <span>

namespace lgvae::kernels {

// c[m×n] = a[m×k] · b[k×n]      (c += ... when accumulate)
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// c[m×n] = aᵀ · b  with a[k×m], b[k×n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// c[m×n] = a · bᵀ  with a[m×k], b[n×k]
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// Per-row square products: each row of a, b, c holds one row-major side×side
// matrix; c_r = a_r · b_r for r in [0, batch).
void batched_square_gemm(std::span<const double> a, std::span<const double> b,
                         std::span<double> c, std::size_t batch, std::size_t side);

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
void batched_square_gemm(std::span<const double> a, std::span<const double> b,
                         std::span<double> c, std::size_t batch, std::size_t side);

}  // namespace serial

// Number of threads the parallel kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace lgvae::kernels
