#pragma once

#include <cstddef>
#include <vector>

namespace hz {

// Dense row-major kernels. Inner loops run over a contiguous output row so
// the compiler can vectorize them without reassociating reductions; keeping
// the summation order fixed keeps results bit-reproducible across runs.

// C[m,n] += A[m,k] * B[k,n]
template <class S>
void gemm_nn(const S* __restrict a, const S* __restrict b, S* __restrict c,
             size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const S* arow = a + i * k;
        S* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const S ap = arow[p];
            if (ap == S(0)) continue;
            const S* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += ap * brow[j];
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
template <class S>
void gemm_tn(const S* __restrict a, const S* __restrict b, S* __restrict c,
             size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const S* arow = a + i * k;
        const S* brow = b + i * n;
        for (size_t p = 0; p < k; ++p) {
            const S ap = arow[p];
            if (ap == S(0)) continue;
            S* crow = c + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += ap * brow[j];
        }
    }
}

// dst[n,m] = src[m,n]^T
template <class S>
void transpose_copy(const S* __restrict src, S* __restrict dst, size_t m, size_t n) {
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j)
            dst[j * m + i] = src[i * n + j];
}

// C[m,n] += A[m,k] * B[n,k]^T via a transposed scratch copy of B. The copy
// is O(n*k) against O(m*n*k) multiply work, and it turns every dot product
// into a vectorizable row accumulation.
template <class S>
void gemm_nt(const S* a, const S* b, S* c, size_t m, size_t k, size_t n) {
    std::vector<S> bt(k * n);
    transpose_copy(b, bt.data(), n, k);
    gemm_nn(a, bt.data(), c, m, k, n);
}

}  // namespace hz
