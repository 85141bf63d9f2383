#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sadv/tensor.hpp"

namespace sadv {

struct Dataset {
    std::string name;
    Tensor images{Shape{1, 1, 1, 1}};  // [N,C,H,W] in value-range units
    std::vector<int> labels;
    double lo = 0.0, hi = 1.0;
    std::size_t classes = 10;

    std::size_t size() const { return labels.size(); }
    /// Enforces the container invariants: image/label counts equal, labels
    /// within [0, classes), every pixel within [lo, hi].
    void check() const;
};

/// MNIST-style IDX pair: big-endian magic 0x00000803 + [N,H,W] raw bytes for
/// images, 0x00000801 + [N] bytes for labels. Pixels are scaled to [0,1] by
/// dividing by 255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Inverse of load_idx for single-channel byte-quantized datasets; pixels are
/// rounded to the nearest 1/255 step.
void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path);

/// Gaussian clusters with unit variance around centers spaced `separation`
/// apart, shaped [N,1,1,dims] so they feed the flatten+fc model path.
Dataset synth_blobs(std::size_t classes, std::size_t n_per_class, std::size_t dims,
                    double separation, std::uint64_t seed);

/// Procedurally rendered 28x28 digit images (10 classes, byte-quantized to
/// [0,1]): glyph bitmaps with random scale/rotation/shift/contrast jitter and
/// pixel noise. Deterministic per seed.
Dataset synth_digits(std::size_t n, std::uint64_t seed);

/// Deterministic stratified sample of n items preserving class proportions
/// within one item per class; output keeps the original relative order.
Dataset subset(const Dataset& d, std::size_t n, std::uint64_t seed);

Tensor batch_images(const Dataset& d, std::size_t start, std::size_t count);
std::vector<int> batch_labels(const Dataset& d, std::size_t start, std::size_t count);

}  // namespace sadv
