/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#include "faultclass/kernels.hpp"

#include <cstring>

// Hot loops are compiled for AVX2 and for the baseline ISA and picked at load time; these
// clones never fuse multiply-add, so they agree bit for bit. Matrix products additionally
// have an FMA path on CPUs that support it, so bits can differ between CPU generations.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define FAULTCLASS_CLONES __attribute__((target_clones("avx2", "default")))
#define FAULTCLASS_HAVE_FMA_PATH 1
#include <immintrin.h>
#else
#define FAULTCLASS_CLONES
#define FAULTCLASS_HAVE_FMA_PATH 0
#endif

namespace faultclass::nn {

namespace {

typedef double v4 __attribute__((vector_size(32)));

#define FAULTCLASS_INLINE inline __attribute__((always_inline))

// R rows by 4*V columns of C, held in registers across the k loop.
template <std::size_t R, std::size_t V>
FAULTCLASS_INLINE void block_vec(std::size_t k, const double* a, std::size_t lda, const double* b,
                                 std::size_t ldb, double* c, std::size_t ldc) {
  v4 acc[R][V];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < V; ++v) std::memcpy(&acc[r][v], c + r * ldc + 4 * v, sizeof(v4));
  }
  for (std::size_t p = 0; p < k; ++p) {
    v4 bv[V];
    for (std::size_t v = 0; v < V; ++v) std::memcpy(&bv[v], b + p * ldb + 4 * v, sizeof(v4));
    for (std::size_t r = 0; r < R; ++r) {
      const v4 x = v4{} + a[r * lda + p];
      for (std::size_t v = 0; v < V; ++v) acc[r][v] += x * bv[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < V; ++v) std::memcpy(c + r * ldc + 4 * v, &acc[r][v], sizeof(v4));
  }
}

// R rows by T < 4 trailing columns.
template <std::size_t R, std::size_t T>
FAULTCLASS_INLINE void block_tail(std::size_t k, const double* a, std::size_t lda, const double* b,
                                  std::size_t ldb, double* c, std::size_t ldc) {
  double acc[R][T];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t t = 0; t < T; ++t) acc[r][t] = c[r * ldc + t];
  }
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t r = 0; r < R; ++r) {
      const double x = a[r * lda + p];
      for (std::size_t t = 0; t < T; ++t) acc[r][t] += x * b[p * ldb + t];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t t = 0; t < T; ++t) c[r * ldc + t] = acc[r][t];
  }
}

template <std::size_t R>
FAULTCLASS_INLINE void row_panel(std::size_t n, std::size_t k, const double* a, std::size_t lda,
                                 const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) block_vec<R, 2>(k, a, lda, b + j, ldb, c + j, ldc);
  if (j + 4 <= n) {
    block_vec<R, 1>(k, a, lda, b + j, ldb, c + j, ldc);
    j += 4;
  }
  switch (n - j) {
    case 1: block_tail<R, 1>(k, a, lda, b + j, ldb, c + j, ldc); break;
    case 2: block_tail<R, 2>(k, a, lda, b + j, ldb, c + j, ldc); break;
    case 3: block_tail<R, 3>(k, a, lda, b + j, ldb, c + j, ldc); break;
    default: break;
  }
}

}  // namespace

FAULTCLASS_CLONES
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

FAULTCLASS_CLONES
void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

namespace {

FAULTCLASS_CLONES
void gemm_generic(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  // B is walked in kKc x kNc tiles that stay in L1 while every row panel uses them.
  // Tiles along k run in order, so each C element still sums over k in index order.
  constexpr std::size_t kNc = 64;
  constexpr std::size_t kKc = 64;
  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = n - jc < kNc ? n - jc : kNc;
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = k - pc < kKc ? k - pc : kKc;
      const double* bt = b + pc * ldb + jc;
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        row_panel<4>(nc, kc, a + i * lda + pc, lda, bt, ldb, c + i * ldc + jc, ldc);
      }
      const double* ai = a + i * lda + pc;
      double* ci = c + i * ldc + jc;
      switch (m - i) {
        case 1: row_panel<1>(nc, kc, ai, lda, bt, ldb, ci, ldc); break;
        case 2: row_panel<2>(nc, kc, ai, lda, bt, ldb, ci, ldc); break;
        case 3: row_panel<3>(nc, kc, ai, lda, bt, ldb, ci, ldc); break;
        default: break;
      }
    }
  }
}

#if FAULTCLASS_HAVE_FMA_PATH
#define FAULTCLASS_FMA __attribute__((target("avx2,fma")))

template <std::size_t R, std::size_t V>
FAULTCLASS_FMA FAULTCLASS_INLINE void fma_block(std::size_t k, const double* a, std::size_t lda,
                                                const double* b, std::size_t ldb, double* c,
                                                std::size_t ldc) {
  __m256d acc[R][V];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < V; ++v) acc[r][v] = _mm256_loadu_pd(c + r * ldc + 4 * v);
  }
  for (std::size_t p = 0; p < k; ++p) {
    __m256d bv[V];
    for (std::size_t v = 0; v < V; ++v) bv[v] = _mm256_loadu_pd(b + p * ldb + 4 * v);
    for (std::size_t r = 0; r < R; ++r) {
      const __m256d x = _mm256_broadcast_sd(a + r * lda + p);
      for (std::size_t v = 0; v < V; ++v) acc[r][v] = _mm256_fmadd_pd(x, bv[v], acc[r][v]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < V; ++v) _mm256_storeu_pd(c + r * ldc + 4 * v, acc[r][v]);
  }
}

template <std::size_t R, std::size_t T>
FAULTCLASS_FMA FAULTCLASS_INLINE void fma_tail(std::size_t k, const double* a, std::size_t lda,
                                               const double* b, std::size_t ldb, double* c,
                                               std::size_t ldc) {
  double acc[R][T];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t t = 0; t < T; ++t) acc[r][t] = c[r * ldc + t];
  }
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t r = 0; r < R; ++r) {
      const double x = a[r * lda + p];
      for (std::size_t t = 0; t < T; ++t) acc[r][t] = __builtin_fma(x, b[p * ldb + t], acc[r][t]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t t = 0; t < T; ++t) c[r * ldc + t] = acc[r][t];
  }
}

template <std::size_t R>
FAULTCLASS_FMA FAULTCLASS_INLINE void fma_panel(std::size_t n, std::size_t k, const double* a,
                                                std::size_t lda, const double* b, std::size_t ldb,
                                                double* c, std::size_t ldc) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) fma_block<R, 2>(k, a, lda, b + j, ldb, c + j, ldc);
  if (j + 4 <= n) {
    fma_block<R, 1>(k, a, lda, b + j, ldb, c + j, ldc);
    j += 4;
  }
  switch (n - j) {
    case 1: fma_tail<R, 1>(k, a, lda, b + j, ldb, c + j, ldc); break;
    case 2: fma_tail<R, 2>(k, a, lda, b + j, ldb, c + j, ldc); break;
    case 3: fma_tail<R, 3>(k, a, lda, b + j, ldb, c + j, ldc); break;
    default: break;
  }
}

FAULTCLASS_FMA
void gemm_fma(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  constexpr std::size_t kNc = 64;
  constexpr std::size_t kKc = 64;
  for (std::size_t jc = 0; jc < n; jc += kNc) {
    const std::size_t nc = n - jc < kNc ? n - jc : kNc;
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = k - pc < kKc ? k - pc : kKc;
      const double* bt = b + pc * ldb + jc;
      std::size_t i = 0;
      for (; i + 6 <= m; i += 6) {
        fma_panel<6>(nc, kc, a + i * lda + pc, lda, bt, ldb, c + i * ldc + jc, ldc);
      }
      const double* ai = a + i * lda + pc;
      double* ci = c + i * ldc + jc;
      switch (m - i) {
        case 1: fma_panel<1>(nc, kc, ai, lda, bt, ldb, ci, ldc); break;
        case 2: fma_panel<2>(nc, kc, ai, lda, bt, ldb, ci, ldc); break;
        case 3: fma_panel<3>(nc, kc, ai, lda, bt, ldb, ci, ldc); break;
        case 4: fma_panel<4>(nc, kc, ai, lda, bt, ldb, ci, ldc); break;
        case 5: fma_panel<5>(nc, kc, ai, lda, bt, ldb, ci, ldc); break;
        default: break;
      }
    }
  }
}

const bool kUseFma = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#endif

}  // namespace

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) {
#if FAULTCLASS_HAVE_FMA_PATH
  if (kUseFma) {
    gemm_fma(m, n, k, a, lda, b, ldb, c, ldc);
    return;
  }
#endif
  gemm_generic(m, n, k, a, lda, b, ldb, c, ldc);
}

void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

}  // namespace faultclass::nn
