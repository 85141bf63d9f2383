#include "sadv/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "sadv/matmul.hpp"

namespace sadv {

Tensor dct_basis(std::size_t n) {
    if (n == 0) throw std::invalid_argument("dct_basis: size must be positive");
    Tensor b({n, n});
    const double s0 = std::sqrt(1.0 / static_cast<double>(n));
    const double sk = std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        const double scale = k == 0 ? s0 : sk;
        for (std::size_t j = 0; j < n; ++j)
            b[k * n + j] = scale * std::cos(std::numbers::pi * static_cast<double>(2 * j + 1) *
                                            static_cast<double>(k) / static_cast<double>(2 * n));
    }
    return b;
}

SpectralPlan::SpectralPlan(std::size_t h, std::size_t w)
    : h_(h),
      w_(w),
      bh_(dct_basis(h)),
      bw_(dct_basis(w)),
      bht_({h, h}),
      bwt_({w, w}) {
    transpose(bh_.data(), bht_.data(), h, h);
    transpose(bw_.data(), bwt_.data(), w, w);
}

void SpectralPlan::check_spatial(const Tensor& t, const char* what) const {
    if (t.rank() < 2 || t.dim(t.rank() - 2) != h_ || t.dim(t.rank() - 1) != w_)
        throw std::invalid_argument(std::string(what) + ": trailing axes of " +
                                    shape_str(t.shape()) + " do not match plan " +
                                    std::to_string(h_) + "x" + std::to_string(w_));
}

Tensor SpectralPlan::dct2(const Tensor& x) const {
    check_spatial(x, "dct2");
    Tensor z(x.shape());
    const std::size_t planes = x.numel() / (h_ * w_);
    std::vector<double> tmp(h_ * w_);
    for (std::size_t p = 0; p < planes; ++p) {
        // Z = Bh * X * Bw^T
        matmul(bh_.data(), x.data() + p * h_ * w_, tmp.data(), h_, h_, w_);
        matmul(tmp.data(), bwt_.data(), z.data() + p * h_ * w_, h_, w_, w_);
    }
    return z;
}

Tensor SpectralPlan::idct2(const Tensor& z) const {
    check_spatial(z, "idct2");
    Tensor x(z.shape());
    const std::size_t planes = z.numel() / (h_ * w_);
    std::vector<double> tmp(h_ * w_);
    for (std::size_t p = 0; p < planes; ++p) {
        // X = Bh^T * Z * Bw
        matmul(bht_.data(), z.data() + p * h_ * w_, tmp.data(), h_, h_, w_);
        matmul(tmp.data(), bw_.data(), x.data() + p * h_ * w_, h_, w_, w_);
    }
    return x;
}

}  // namespace sadv
