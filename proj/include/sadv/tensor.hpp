#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sadv {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense n-dimensional array of 64-bit reals, row-major.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    void fill(double value);
    bool all_finite() const;

    /// Same data, new shape; element counts must match.
    Tensor reshaped(Shape shape) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& t);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-12);

}  // namespace sadv
