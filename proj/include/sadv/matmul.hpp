#pragma once

#include <cstddef>

namespace sadv {

/// C[m×n] = A[m×k] · B[k×n] (or += when accumulate). Row-major, serial, deterministic.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate = false);

/// out[cols×rows] = transpose of a[rows×cols].
void transpose(const double* a, double* out, std::size_t rows, std::size_t cols);

}  // namespace sadv
