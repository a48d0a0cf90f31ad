#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "hf/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hf {

// Row-major GEMM kernels. All loops are ordered so that every output element
// is accumulated in a fixed sequence; parallelism only ever splits disjoint
// output regions, which keeps results bit-identical for a given thread count
// (and exactly serial when num_threads()==1).

namespace detail {

template <typename R, int MR, int NB>
inline void gemm_nn_tile(int k, int n, const R* a, const R* b, R* acc) {
    for (int l = 0; l < k; ++l) {
        const R* brow = b + static_cast<size_t>(l) * n;
        for (int ii = 0; ii < MR; ++ii) {
            const R av = a[static_cast<size_t>(ii) * k + l];
            R* arow = acc + ii * NB;
            for (int j = 0; j < NB; ++j) arow[j] += av * brow[j];
        }
    }
}

template <typename R>
inline void gemm_nn_rows(int i0, int i1, int m, int k, int n, const R* A, const R* B, R* C,
                         bool accumulate) {
    constexpr int MR = 4;
    constexpr int NB = 64;
    (void)m;
    R acc[MR * NB];
    for (int i = i0; i < i1; i += MR) {
        const int mb = std::min(MR, i1 - i);
        for (int j0 = 0; j0 < n; j0 += NB) {
            const int nb = std::min(NB, n - j0);
            if (mb == MR && nb == NB) {
                std::memset(acc, 0, sizeof(acc));
                gemm_nn_tile<R, MR, NB>(k, n, A + static_cast<size_t>(i) * k, B + j0, acc);
            } else {
                std::memset(acc, 0, sizeof(R) * MR * NB);
                for (int l = 0; l < k; ++l) {
                    const R* brow = B + static_cast<size_t>(l) * n + j0;
                    for (int ii = 0; ii < mb; ++ii) {
                        const R av = A[static_cast<size_t>(i + ii) * k + l];
                        R* arow = acc + ii * NB;
                        for (int j = 0; j < nb; ++j) arow[j] += av * brow[j];
                    }
                }
            }
            for (int ii = 0; ii < mb; ++ii) {
                R* crow = C + static_cast<size_t>(i + ii) * n + j0;
                const R* arow = acc + ii * NB;
                if (accumulate) {
                    for (int j = 0; j < nb; ++j) crow[j] += arow[j];
                } else {
                    for (int j = 0; j < nb; ++j) crow[j] = arow[j];
                }
            }
        }
    }
}

}  // namespace detail

// C[m x n] = A[m x k] * B[k x n]   (or += when accumulate)
template <typename R>
void gemm_nn(int m, int k, int n, const R* A, const R* B, R* C, bool accumulate = false) {
    const int nt = num_threads();
    const long long work = static_cast<long long>(m) * k * n;
    if (nt > 1 && m >= 8 && work >= (1 << 18)) {
#ifdef _OPENMP
        const int chunks = nt;
        // split on 4-row boundaries so tile shapes match the serial path
        const int rows4 = (m + 3) / 4;
#pragma omp parallel for num_threads(nt) schedule(static)
        for (int c = 0; c < chunks; ++c) {
            int b0 = static_cast<int>(static_cast<long long>(rows4) * c / chunks) * 4;
            int b1 = static_cast<int>(static_cast<long long>(rows4) * (c + 1) / chunks) * 4;
            b1 = std::min(b1, m);
            if (b0 < b1) detail::gemm_nn_rows(b0, b1, m, k, n, A, B, C, accumulate);
        }
        return;
#endif
    }
    detail::gemm_nn_rows(0, m, m, k, n, A, B, C, accumulate);
}

// C[p x n] (+)= A^T * B where A is [m x p], B is [m x n].
// Streaming outer-product form: A and B are each read once; the p*n
// accumulator stays cache-resident for the sizes this project uses.
template <typename R>
void gemm_tn(int p, int m, int n, const R* A, const R* B, R* C, bool accumulate = false) {
    const int nt = num_threads();
    const long long work = static_cast<long long>(m) * p * n;
    const size_t cn = static_cast<size_t>(p) * n;
    auto run = [&](int i0, int i1, R* out) {
        int i = i0;
        // 4 input rows per pass amortize the accumulator traffic
        for (; i + 4 <= i1; i += 4) {
            const R* a0 = A + static_cast<size_t>(i) * p;
            const R* a1 = a0 + p;
            const R* a2 = a1 + p;
            const R* a3 = a2 + p;
            const R* b0 = B + static_cast<size_t>(i) * n;
            const R* b1 = b0 + n;
            const R* b2 = b1 + n;
            const R* b3 = b2 + n;
            for (int l = 0; l < p; ++l) {
                const R v0 = a0[l], v1 = a1[l], v2 = a2[l], v3 = a3[l];
                R* crow = out + static_cast<size_t>(l) * n;
                for (int j = 0; j < n; ++j)
                    crow[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
            }
        }
        for (; i < i1; ++i) {
            const R* arow = A + static_cast<size_t>(i) * p;
            const R* brow = B + static_cast<size_t>(i) * n;
            for (int l = 0; l < p; ++l) {
                const R av = arow[l];
                R* crow = out + static_cast<size_t>(l) * n;
                for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    };
    if (nt > 1 && m >= 256 && work >= (1 << 18) && cn <= (1u << 20)) {
#ifdef _OPENMP
        std::vector<R> partials(static_cast<size_t>(nt) * cn, R(0));
#pragma omp parallel for num_threads(nt) schedule(static)
        for (int c = 0; c < nt; ++c) {
            int b0 = static_cast<int>(static_cast<long long>(m) * c / nt);
            int b1 = static_cast<int>(static_cast<long long>(m) * (c + 1) / nt);
            run(b0, b1, partials.data() + static_cast<size_t>(c) * cn);
        }
        if (!accumulate) std::memset(C, 0, sizeof(R) * cn);
        for (int c = 0; c < nt; ++c) {
            const R* part = partials.data() + static_cast<size_t>(c) * cn;
            for (size_t idx = 0; idx < cn; ++idx) C[idx] += part[idx];
        }
        return;
#endif
    }
    if (!accumulate) std::memset(C, 0, sizeof(R) * cn);
    run(0, m, C);
}

// B[n x m] = A[m x n]^T
template <typename R>
void transpose_mat(int m, int n, const R* A, R* B) {
    constexpr int BS = 32;
    for (int i0 = 0; i0 < m; i0 += BS) {
        const int i1 = std::min(i0 + BS, m);
        for (int j0 = 0; j0 < n; j0 += BS) {
            const int j1 = std::min(j0 + BS, n);
            for (int i = i0; i < i1; ++i)
                for (int j = j0; j < j1; ++j)
                    B[static_cast<size_t>(j) * m + i] = A[static_cast<size_t>(i) * n + j];
        }
    }
}

}  // namespace hf
