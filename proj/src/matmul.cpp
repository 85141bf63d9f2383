#include "sadv/matmul.hpp"

#include <cstring>

namespace sadv {

namespace {

// Four output rows per pass so each loaded B row is reused four times.
// The j loop is contiguous and auto-vectorizes.
inline void block4(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                   std::size_t n) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n;
        double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
        for (std::size_t j = 0; j < n; ++j) {
            double w = bp[j];
            c0[j] += v0 * w;
            c1[j] += v1 * w;
            c2[j] += v2 * w;
            c3[j] += v3 * w;
        }
    }
}

inline void block1(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                   std::size_t n) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n;
        double v = ai[p];
        for (std::size_t j = 0; j < n; ++j) ci[j] += v * bp[j];
    }
}

}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) block4(a, b, c, i, k, n);
    for (; i < m; ++i) block1(a, b, c, i, k, n);
}

void transpose(const double* a, double* out, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
    }
}

}  // namespace sadv
