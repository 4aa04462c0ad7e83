#include "presspose/kernels.hpp"

// AVX2+FMA variants, 4 doubles per lane. Compiled with -mavx2 -mfma; only
// reachable through the dispatcher, which checks CPU support first.

#if defined(__x86_64__) || defined(_M_X64)
#define PRESSPOSE_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define PRESSPOSE_HAVE_AVX2_BUILD 0
#endif

namespace presspose::kern {

#if PRESSPOSE_HAVE_AVX2_BUILD

namespace {

void gemm_nn_avx2(size_t m, size_t k, size_t n,
                  const double* a, const double* b, double* c, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        if (!accumulate) {
            size_t j = 0;
            const __m256d zero = _mm256_setzero_pd();
            for (; j + 4 <= n; j += 4) _mm256_storeu_pd(crow + j, zero);
            for (; j < n; ++j) crow[j] = 0.0;
        }
        const double* arow = a + i * k;
        for (size_t l = 0; l < k; ++l) {
            const __m256d av = _mm256_set1_pd(arow[l]);
            const double* brow = b + l * n;
            size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                __m256d c1 = _mm256_loadu_pd(crow + j + 4);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j + 4), c1);
                _mm256_storeu_pd(crow + j, c0);
                _mm256_storeu_pd(crow + j + 4, c1);
            }
            for (; j + 4 <= n; j += 4) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                _mm256_storeu_pd(crow + j, c0);
            }
            const double avs = arow[l];
            for (; j < n; ++j) crow[j] += avs * brow[j];
        }
    }
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline double dot_avx2_impl(size_t n, const double* x, const double* y) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void gemm_nt_avx2(size_t m, size_t k, size_t n,
                  const double* a, const double* b, double* c, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double acc = dot_avx2_impl(k, arow, b + j * k);
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void gemm_tn_avx2(size_t m, size_t k, size_t n,
                  const double* a, const double* b, double* c, bool accumulate) {
    if (!accumulate) {
        size_t i = 0;
        const __m256d zero = _mm256_setzero_pd();
        for (; i + 4 <= m * n; i += 4) _mm256_storeu_pd(c + i, zero);
        for (; i < m * n; ++i) c[i] = 0.0;
    }
    for (size_t l = 0; l < k; ++l) {
        const double* arow = a + l * m;
        const double* brow = b + l * n;
        for (size_t i = 0; i < m; ++i) {
            const __m256d av = _mm256_set1_pd(arow[i]);
            double* crow = c + i * n;
            size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                _mm256_storeu_pd(crow + j, c0);
            }
            const double avs = arow[i];
            for (; j < n; ++j) crow[j] += avs * brow[j];
        }
    }
}

double dot_avx2(size_t n, const double* x, const double* y) {
    return dot_avx2_impl(n, x, y);
}

void axpy_avx2(size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelSet* avx2_set() {
    if (!(__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))) return nullptr;
    static const KernelSet set{
        "avx2", gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2, dot_avx2, axpy_avx2,
    };
    return &set;
}

#else

const KernelSet* avx2_set() { return nullptr; }

#endif

}  // namespace presspose::kern
