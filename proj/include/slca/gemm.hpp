#pragma once

#include <cstddef>

namespace slca {

// Small dense-matmul kernels used by conv2d and linear. All loops run in a
// fixed order, so results are identical from run to run. The saxpy forms
// (k outermost over the contraction, contiguous inner loop) vectorize
// without reassociation flags.

// C[M,N] += A[M,K] * B[K,N], all row-major.
template <typename T>
void gemm_nn(T* C, const T* A, const T* B, int M, int K, int N) {
    int i = 0;
    for (; i + 4 <= M; i += 4) {
        T* c0 = C + static_cast<std::size_t>(i) * N;
        T* c1 = c0 + N;
        T* c2 = c1 + N;
        T* c3 = c2 + N;
        const T* a = A + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T a0 = a[k];
            const T a1 = a[K + k];
            const T a2 = a[2 * K + k];
            const T a3 = a[3 * K + k];
            const T* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) {
                c0[j] += a0 * b[j];
                c1[j] += a1 * b[j];
                c2[j] += a2 * b[j];
                c3[j] += a3 * b[j];
            }
        }
    }
    for (; i < M; ++i) {
        T* c0 = C + static_cast<std::size_t>(i) * N;
        const T* a = A + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T a0 = a[k];
            const T* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c0[j] += a0 * b[j];
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]: accumulated as a sum of rank-1 updates.
template <typename T>
void gemm_tn(T* C, const T* A, const T* B, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const T* arow = A + static_cast<std::size_t>(m) * K;
        const T* brow = B + static_cast<std::size_t>(m) * N;
        int j = 0;
        for (; j + 4 <= K; j += 4) {
            T* c0 = C + static_cast<std::size_t>(j) * N;
            T* c1 = c0 + N;
            T* c2 = c1 + N;
            T* c3 = c2 + N;
            const T a0 = arow[j];
            const T a1 = arow[j + 1];
            const T a2 = arow[j + 2];
            const T a3 = arow[j + 3];
            for (int t = 0; t < N; ++t) {
                c0[t] += a0 * brow[t];
                c1[t] += a1 * brow[t];
                c2[t] += a2 * brow[t];
                c3[t] += a3 * brow[t];
            }
        }
        for (; j < K; ++j) {
            T* c0 = C + static_cast<std::size_t>(j) * N;
            const T a0 = arow[j];
            for (int t = 0; t < N; ++t) c0[t] += a0 * brow[t];
        }
    }
}

// Strip-mined dot product with a fixed lane layout.
template <typename T>
T dot(const T* a, const T* b, int n) {
    T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int k = 0;
    for (; k + 8 <= n; k += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[k + l] * b[k + l];
    T tail = T(0);
    for (; k < n; ++k) tail += a[k] * b[k];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// C[M,N] += A[M,K] * B[N,K]^T: rows of A against rows of B.
template <typename T>
void gemm_nt(T* C, const T* A, const T* B, int M, int K, int N) {
    for (int i = 0; i < M; ++i) {
        const T* arow = A + static_cast<std::size_t>(i) * K;
        T* crow = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) crow[j] += dot(arow, B + static_cast<std::size_t>(j) * K, K);
    }
}

}  // namespace slca
