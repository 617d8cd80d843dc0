#ifndef OCT4D_GEMM_HPP
#define OCT4D_GEMM_HPP

#include <cstdint>
#include <type_traits>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace oct4d::detail {

// Accumulating matrix kernels behind the convolution lowering. Shapes here
// are skinny: M is an output-channel count (3..30), N an output-position
// count (64..32k), K a channels-times-taps contraction (27..4k). Generic
// BLAS kernels waste most of their micro-tile at M~10, so the hot f32 path
// is hand-tiled for small M; everything else falls back to plain blocked
// loops the compiler vectorizes.
//
// All kernels use a fixed loop order independent of any thread count, so
// results are bitwise reproducible; callers parallelize across disjoint
// outputs only.

// ---- generic fallbacks (any arithmetic T) ----

// C[M x N] += A[M x K] * B[K x N]; row-major, ld* = row strides. With
// Acc = false C is overwritten instead (skips a separate zero fill).
template <bool Acc, typename T>
void gemm_nn_generic(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda,
                     const T* B, int64_t ldb, T* C, int64_t ldc) {
  for (int64_t m = 0; m < M; ++m) {
    T* c = C + m * ldc;
    if (!Acc)
      for (int64_t n = 0; n < N; ++n) c[n] = T(0);
    for (int64_t k = 0; k < K; ++k) {
      T a = A[m * lda + k];
      const T* b = B + k * ldb;
      for (int64_t n = 0; n < N; ++n) c[n] += a * b[n];
    }
  }
}

// C[M x K] += A[M x N] * B[K x N]^T; the contraction runs over N.
template <typename T>
void gemm_nt_acc_generic(int64_t M, int64_t K, int64_t N, const T* A, int64_t lda,
                         const T* B, int64_t ldb, T* C, int64_t ldc) {
  for (int64_t m = 0; m < M; ++m) {
    const T* a = A + m * lda;
    for (int64_t k = 0; k < K; ++k) {
      const T* b = B + k * ldb;
      T acc = 0;
      for (int64_t n = 0; n < N; ++n) acc += a[n] * b[n];
      C[m * ldc + k] += acc;
    }
  }
}

#if defined(__AVX512F__)

// ---- f32 AVX-512 path ----

template <int MR, bool Acc>
inline void kern_nn_mr(const float* A, int64_t lda, const float* B, int64_t ldb,
                       float* C, int64_t ldc, int64_t K, int64_t nw, __mmask16 tail) {
  // nw full 16-lane column blocks, then one masked block if tail != 0.
  __m512 acc[MR][2];
  const bool two = nw >= 2;
  for (int m = 0; m < MR; ++m) {
    acc[m][0] = Acc ? _mm512_loadu_ps(C + m * ldc) : _mm512_setzero_ps();
    if (two) acc[m][1] = Acc ? _mm512_loadu_ps(C + m * ldc + 16) : _mm512_setzero_ps();
  }
  if (nw >= 1) {
    for (int64_t k = 0; k < K; ++k) {
      const float* b = B + k * ldb;
      __m512 b0 = _mm512_loadu_ps(b);
      __m512 b1 = two ? _mm512_loadu_ps(b + 16) : _mm512_setzero_ps();
      for (int m = 0; m < MR; ++m) {
        __m512 a = _mm512_set1_ps(A[m * lda + k]);
        acc[m][0] = _mm512_fmadd_ps(a, b0, acc[m][0]);
        if (two) acc[m][1] = _mm512_fmadd_ps(a, b1, acc[m][1]);
      }
    }
    for (int m = 0; m < MR; ++m) {
      _mm512_storeu_ps(C + m * ldc, acc[m][0]);
      if (two) _mm512_storeu_ps(C + m * ldc + 16, acc[m][1]);
    }
  }
  if (tail) {
    int64_t off = nw * 16;
    __m512 t[MR];
    for (int m = 0; m < MR; ++m)
      t[m] = Acc ? _mm512_maskz_loadu_ps(tail, C + m * ldc + off) : _mm512_setzero_ps();
    for (int64_t k = 0; k < K; ++k) {
      __m512 b0 = _mm512_maskz_loadu_ps(tail, B + k * ldb + off);
      for (int m = 0; m < MR; ++m)
        t[m] = _mm512_fmadd_ps(_mm512_set1_ps(A[m * lda + k]), b0, t[m]);
    }
    for (int m = 0; m < MR; ++m) _mm512_mask_storeu_ps(C + m * ldc + off, tail, t[m]);
  }
}

template <bool Acc>
inline void gemm_nn_f32(int64_t M, int64_t N, int64_t K, const float* A, int64_t lda,
                        const float* B, int64_t ldb, float* C, int64_t ldc) {
  // March down N in 32-lane panels; within a panel, M in tiles of <= 10.
  for (int64_t n = 0; n < N; n += 32) {
    int64_t cols = N - n < 32 ? N - n : 32;
    int64_t nw = cols / 16;
    __mmask16 tail = static_cast<__mmask16>((1u << (cols % 16)) - 1);
    const float* b = B + n;
    int64_t m = 0;
    for (; m + 10 <= M; m += 10)
      kern_nn_mr<10, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail);
    switch (M - m) {
      case 0: break;
      case 1: kern_nn_mr<1, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
      case 2: kern_nn_mr<2, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
      case 3: kern_nn_mr<3, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
      case 4: kern_nn_mr<4, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
      case 5: kern_nn_mr<5, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
      case 6: kern_nn_mr<6, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
      case 7: kern_nn_mr<7, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
      case 8: kern_nn_mr<8, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
      default: kern_nn_mr<9, Acc>(A + m * lda, lda, b, ldb, C + m * ldc + n, ldc, K, nw, tail); break;
    }
  }
}

inline float hsum(__m512 v) { return _mm512_reduce_add_ps(v); }

template <int MR>
inline void kern_nt_mr(const float* A, int64_t lda, const float* B, int64_t ldb,
                       float* C, int64_t ldc, int64_t N, int64_t k, int64_t kr) {
  // Dot products over N for an MR x kr tile; kr <= 2 keeps registers sane.
  __m512 acc[MR][2];
  for (int m = 0; m < MR; ++m)
    for (int j = 0; j < 2; ++j) acc[m][j] = _mm512_setzero_ps();
  int64_t n = 0;
  for (; n + 16 <= N; n += 16) {
    __m512 b0 = _mm512_loadu_ps(B + k * ldb + n);
    __m512 b1 = kr > 1 ? _mm512_loadu_ps(B + (k + 1) * ldb + n) : _mm512_setzero_ps();
    for (int m = 0; m < MR; ++m) {
      __m512 a = _mm512_loadu_ps(A + m * lda + n);
      acc[m][0] = _mm512_fmadd_ps(a, b0, acc[m][0]);
      if (kr > 1) acc[m][1] = _mm512_fmadd_ps(a, b1, acc[m][1]);
    }
  }
  if (n < N) {
    __mmask16 tail = static_cast<__mmask16>((1u << (N - n)) - 1);
    __m512 b0 = _mm512_maskz_loadu_ps(tail, B + k * ldb + n);
    __m512 b1 = kr > 1 ? _mm512_maskz_loadu_ps(tail, B + (k + 1) * ldb + n) : _mm512_setzero_ps();
    for (int m = 0; m < MR; ++m) {
      __m512 a = _mm512_maskz_loadu_ps(tail, A + m * lda + n);
      acc[m][0] = _mm512_fmadd_ps(a, b0, acc[m][0]);
      if (kr > 1) acc[m][1] = _mm512_fmadd_ps(a, b1, acc[m][1]);
    }
  }
  for (int m = 0; m < MR; ++m) {
    C[m * ldc + k] += hsum(acc[m][0]);
    if (kr > 1) C[m * ldc + k + 1] += hsum(acc[m][1]);
  }
}

inline void gemm_nt_acc_f32(int64_t M, int64_t K, int64_t N, const float* A, int64_t lda,
                            const float* B, int64_t ldb, float* C, int64_t ldc) {
  for (int64_t k = 0; k < K; k += 2) {
    int64_t kr = K - k < 2 ? K - k : 2;
    int64_t m = 0;
    for (; m + 10 <= M; m += 10)
      kern_nt_mr<10>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr);
    switch (M - m) {
      case 0: break;
      case 1: kern_nt_mr<1>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
      case 2: kern_nt_mr<2>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
      case 3: kern_nt_mr<3>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
      case 4: kern_nt_mr<4>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
      case 5: kern_nt_mr<5>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
      case 6: kern_nt_mr<6>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
      case 7: kern_nt_mr<7>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
      case 8: kern_nt_mr<8>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
      default: kern_nt_mr<9>(A + m * lda, lda, B, ldb, C + m * ldc, ldc, N, k, kr); break;
    }
  }
}

#endif  // __AVX512F__

template <typename T>
void gemm_nn_acc(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B,
                 int64_t ldb, T* C, int64_t ldc) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    gemm_nn_f32<true>(M, N, K, A, lda, B, ldb, C, ldc);
    return;
  }
#endif
  gemm_nn_generic<true>(M, N, K, A, lda, B, ldb, C, ldc);
}

// Overwriting variant: C = A * B.
template <typename T>
void gemm_nn_ovr(int64_t M, int64_t N, int64_t K, const T* A, int64_t lda, const T* B,
                 int64_t ldb, T* C, int64_t ldc) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    gemm_nn_f32<false>(M, N, K, A, lda, B, ldb, C, ldc);
    return;
  }
#endif
  gemm_nn_generic<false>(M, N, K, A, lda, B, ldb, C, ldc);
}

template <typename T>
void gemm_nt_acc(int64_t M, int64_t K, int64_t N, const T* A, int64_t lda, const T* B,
                 int64_t ldb, T* C, int64_t ldc) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    gemm_nt_acc_f32(M, K, N, A, lda, B, ldb, C, ldc);
    return;
  }
#endif
  gemm_nt_acc_generic(M, K, N, A, lda, B, ldb, C, ldc);
}

}  // namespace oct4d::detail

#endif
