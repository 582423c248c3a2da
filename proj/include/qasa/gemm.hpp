#pragma once

#include <cstddef>

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace qasa::detail {

// Row-major dgemm wrappers. BLAS is pinned to one thread so results are
// bit-reproducible regardless of the host's core count; concurrency happens
// at the experiment-cell level instead.

inline void blas_single_thread() {
    static const bool once = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)once;
}

// C(m x p) = A(m x k) * B(k x p); accumulate adds into C instead.
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t p,
                    const double* a, const double* b, double* c,
                    bool accumulate = false) {
    blas_single_thread();
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
                static_cast<int>(p), static_cast<int>(k), 1.0, a,
                static_cast<int>(k), b, static_cast<int>(p),
                accumulate ? 1.0 : 0.0, c, static_cast<int>(p));
}

// C(m x p) = A(m x k) * B(p x k)^T.
inline void gemm_nt(std::size_t m, std::size_t k, std::size_t p,
                    const double* a, const double* b, double* c,
                    bool accumulate = false) {
    blas_single_thread();
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m),
                static_cast<int>(p), static_cast<int>(k), 1.0, a,
                static_cast<int>(k), b, static_cast<int>(k),
                accumulate ? 1.0 : 0.0, c, static_cast<int>(p));
}

// C(k x p) = A(m x k)^T * B(m x p).
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t p,
                    const double* a, const double* b, double* c,
                    bool accumulate = false) {
    blas_single_thread();
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(k),
                static_cast<int>(p), static_cast<int>(m), 1.0, a,
                static_cast<int>(k), b, static_cast<int>(p),
                accumulate ? 1.0 : 0.0, c, static_cast<int>(p));
}

}  // namespace qasa::detail
