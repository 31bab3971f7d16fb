#include "lgvae/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lgvae::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (long i = 0; i < rows; ++i) {
        double* crow = cp + i * n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        const double* arow = ap + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = bp + p * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (long i = 0; i < rows; ++i) {
        double* crow = cp + i * n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        for (std::size_t p = 0; p < k; ++p) {
            const double api = ap[p * m + i];
            const double* brow = bp + p * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
        }
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
    for (long i = 0; i < rows; ++i) {
        const double* arow = ap + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = bp + j * k;
            double s = accumulate ? cp[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            cp[i * n + j] = s;
        }
    }
}

void batched_square_gemm(std::span<const double> a, std::span<const double> b,
                         std::span<double> c, std::size_t batch, std::size_t side) {
    const std::size_t block = side * side;
    const long count = static_cast<long>(batch);
#pragma omp parallel for schedule(static) if (batch * block * side >= kParallelWork)
    for (long r = 0; r < count; ++r) {
        const double* ar = a.data() + r * block;
        const double* br = b.data() + r * block;
        double* cr = c.data() + r * block;
        for (std::size_t i = 0; i < side; ++i) {
            double* crow = cr + i * side;
            for (std::size_t j = 0; j < side; ++j) crow[j] = 0.0;
            for (std::size_t p = 0; p < side; ++p) {
                const double aip = ar[i * side + p];
                const double* brow = br + p * side;
                for (std::size_t j = 0; j < side; ++j) crow[j] += aip * brow[j];
            }
        }
    }
}

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
            c[i * n + j] = s;
        }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
            c[i * n + j] = s;
        }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = accumulate ? c[i * n + j] : 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
            c[i * n + j] = s;
        }
}

void batched_square_gemm(std::span<const double> a, std::span<const double> b,
                         std::span<double> c, std::size_t batch, std::size_t side) {
    const std::size_t block = side * side;
    for (std::size_t r = 0; r < batch; ++r)
        gemm_nn(a.subspan(r * block, block), b.subspan(r * block, block),
                c.subspan(r * block, block), side, side, side, false);
}

}  // namespace serial

}  // namespace lgvae::kernels
