#pragma once

#include <cstddef>

#include "sadv/tensor.hpp"

namespace sadv {

/// Orthonormal type-II discrete cosine basis for length n.
/// Row k, column j: s_k * cos(pi * (2j+1) * k / (2n)) with s_0 = sqrt(1/n)
/// and s_k = sqrt(2/n) otherwise, so the matrix is orthogonal and the
/// inverse transform is its transpose.
Tensor dct_basis(std::size_t n);

/// Whole-image, per-channel 2-D cosine transform for a fixed spatial size.
/// Accepts any tensor whose trailing two axes are [H,W]; leading axes are
/// treated as independent planes (channels, batch).
class SpectralPlan {
public:
    SpectralPlan(std::size_t h, std::size_t w);

    Tensor dct2(const Tensor& x) const;
    Tensor idct2(const Tensor& z) const;

    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }
    const Tensor& basis_h() const { return bh_; }
    const Tensor& basis_w() const { return bw_; }
    const Tensor& basis_h_t() const { return bht_; }
    const Tensor& basis_w_t() const { return bwt_; }

private:
    void check_spatial(const Tensor& t, const char* what) const;

    std::size_t h_, w_;
    Tensor bh_, bw_;    // forward bases
    Tensor bht_, bwt_;  // transposes, cached for the inverse
};

}  // namespace sadv
