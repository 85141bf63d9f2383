#include "sadv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sadv {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    for (std::size_t d : shape_) {
        if (d == 0) throw std::invalid_argument("Tensor: zero extent in shape " + shape_str(shape_));
    }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_numel(shape_) != data_.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw std::invalid_argument("reshape: " + shape_str(shape_) + " -> " + shape_str(shape) +
                                    " changes element count");
    }
    return Tensor(std::move(shape), data_);
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

double max_rel_diff(const Tensor& a, const Tensor& b, double floor) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("max_rel_diff: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        m = std::max(m, std::abs(a[i] - b[i]) / denom);
    }
    return m;
}

}  // namespace sadv
