/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>

namespace faultclass::nn {

// Dot product with four independent partial sums; the fixed grouping keeps results reproducible.
double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x over n elements.
void axpy(std::size_t n, double alpha, const double* x, double* y);

// C[m x n] += A[m x k] * B[k x n]. Row strides are lda, ldb, ldc.
// Each C element accumulates over k in index order, whatever the blocking.
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc);

// dst[cols x rows] = src[rows x cols] transposed.
void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst);

}  // namespace faultclass::nn
