#include "presspose/kernels.hpp"

// Reference kernels. Plain loops, single accumulator per output element;
// these define the semantics the SIMD variants are tested against.

namespace presspose::kern {
namespace {

void gemm_nn_scalar(size_t m, size_t k, size_t n,
                    const double* a, const double* b, double* c, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        if (!accumulate)
            for (size_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * k;
        for (size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            const double* brow = b + l * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_scalar(size_t m, size_t k, size_t n,
                    const double* a, const double* b, double* c, bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

void gemm_tn_scalar(size_t m, size_t k, size_t n,
                    const double* a, const double* b, double* c, bool accumulate) {
    if (!accumulate)
        for (size_t i = 0; i < m * n; ++i) c[i] = 0.0;
    for (size_t l = 0; l < k; ++l) {
        const double* arow = a + l * m;
        const double* brow = b + l * n;
        for (size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

double dot_scalar(size_t n, const double* x, const double* y) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void axpy_scalar(size_t n, double alpha, const double* x, double* y) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelSet& scalar_set() {
    static const KernelSet set{
        "scalar", gemm_nn_scalar, gemm_nt_scalar, gemm_tn_scalar, dot_scalar, axpy_scalar,
    };
    return set;
}

}  // namespace presspose::kern
