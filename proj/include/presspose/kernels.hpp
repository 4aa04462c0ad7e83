#pragma once

#include <cstddef>

// Data-parallel inner loops behind the model. Every routine has a scalar
// reference implementation and an AVX2 variant; the dispatcher picks one at
// runtime from CPU features (override with PRESSPOSE_KERNELS=scalar|avx2).
// The two variants may differ in accumulation order, so results agree to
// rounding, not bitwise; the equivalence tests pin the tolerance.

namespace presspose::kern {

struct KernelSet {
    const char* name;

    // C[m x n] = A[m x k] * B[k x n], row-major; accumulate adds into C.
    void (*gemm_nn)(size_t m, size_t k, size_t n,
                    const double* a, const double* b, double* c, bool accumulate);
    // C[m x n] = A[m x k] * B[n x k]^T, i.e. C[i][j] = sum_l A[i][l] B[j][l].
    void (*gemm_nt)(size_t m, size_t k, size_t n,
                    const double* a, const double* b, double* c, bool accumulate);
    // C[m x n] = A[k x m]^T * B[k x n], i.e. C[i][j] = sum_l A[l][i] B[l][j].
    void (*gemm_tn)(size_t m, size_t k, size_t n,
                    const double* a, const double* b, double* c, bool accumulate);

    double (*dot)(size_t n, const double* x, const double* y);
    // y += alpha * x
    void (*axpy)(size_t n, double alpha, const double* x, double* y);
};

const KernelSet& scalar_set();
// Null when the CPU does not support AVX2+FMA.
const KernelSet* avx2_set();

// Active set: chosen once, at first use.
const KernelSet& active();
// Test hook; throws Error(BadArgument) for unknown or unsupported names.
void force(const char* name);

// Convenience wrappers over active().
inline void gemm_nn(size_t m, size_t k, size_t n, const double* a, const double* b,
                    double* c, bool acc = false) { active().gemm_nn(m, k, n, a, b, c, acc); }
inline void gemm_nt(size_t m, size_t k, size_t n, const double* a, const double* b,
                    double* c, bool acc = false) { active().gemm_nt(m, k, n, a, b, c, acc); }
inline void gemm_tn(size_t m, size_t k, size_t n, const double* a, const double* b,
                    double* c, bool acc = false) { active().gemm_tn(m, k, n, a, b, c, acc); }
inline double dot(size_t n, const double* x, const double* y) { return active().dot(n, x, y); }
inline void axpy(size_t n, double alpha, const double* x, double* y) { active().axpy(n, alpha, x, y); }

}  // namespace presspose::kern
