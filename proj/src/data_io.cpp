#include "sadv/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sadv/rng.hpp"

namespace sadv {

void Dataset::check() const {
    if (images.rank() != 4)
        throw std::invalid_argument("dataset " + name + ": images must be [N,C,H,W]");
    if (images.dim(0) != labels.size())
        throw std::invalid_argument("dataset " + name + ": " + std::to_string(images.dim(0)) +
                                    " images vs " + std::to_string(labels.size()) + " labels");
    for (int y : labels)
        if (y < 0 || y >= static_cast<int>(classes))
            throw std::invalid_argument("dataset " + name + ": label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(classes) + ")");
    for (std::size_t i = 0; i < images.numel(); ++i)
        if (!(images[i] >= lo && images[i] <= hi))
            throw std::invalid_argument("dataset " + name + ": pixel outside [" +
                                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(path + ": truncated file");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error(images_path + ": cannot open");
    const std::uint32_t img_magic = read_u32_be(imgs, images_path);
    if (img_magic != 0x00000803u)
        throw std::runtime_error(images_path + ": wrong magic (expected 0x00000803)");
    const std::uint32_t n = read_u32_be(imgs, images_path);
    const std::uint32_t h = read_u32_be(imgs, images_path);
    const std::uint32_t w = read_u32_be(imgs, images_path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(n) * h * w);
    if (!imgs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw std::runtime_error(images_path + ": truncated file");

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error(labels_path + ": cannot open");
    const std::uint32_t lab_magic = read_u32_be(labs, labels_path);
    if (lab_magic != 0x00000801u)
        throw std::runtime_error(labels_path + ": wrong magic (expected 0x00000801)");
    const std::uint32_t ln = read_u32_be(labs, labels_path);
    if (ln != n)
        throw std::runtime_error(labels_path + ": label count " + std::to_string(ln) +
                                 " does not match image count " + std::to_string(n));
    std::vector<unsigned char> lraw(ln);
    if (!labs.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(lraw.size())))
        throw std::runtime_error(labels_path + ": truncated file");

    Dataset d;
    d.name = images_path;
    d.images = Tensor({n, 1, h, w});
    for (std::size_t i = 0; i < raw.size(); ++i) d.images[i] = raw[i] / 255.0;
    d.labels.assign(lraw.begin(), lraw.end());
    d.lo = 0.0;
    d.hi = 1.0;
    d.classes = 10;
    d.check();
    return d;
}

void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path) {
    if (d.images.dim(1) != 1)
        throw std::invalid_argument("save_idx: only single-channel datasets fit the format");
    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw std::runtime_error(images_path + ": cannot open for writing");
    write_u32_be(imgs, 0x00000803u);
    write_u32_be(imgs, static_cast<std::uint32_t>(d.images.dim(0)));
    write_u32_be(imgs, static_cast<std::uint32_t>(d.images.dim(2)));
    write_u32_be(imgs, static_cast<std::uint32_t>(d.images.dim(3)));
    std::vector<unsigned char> raw(d.images.numel());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double v = std::round(d.images[i] * 255.0);
        raw[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
    imgs.write(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!imgs) throw std::runtime_error(images_path + ": write failed");

    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) throw std::runtime_error(labels_path + ": cannot open for writing");
    write_u32_be(labs, 0x00000801u);
    write_u32_be(labs, static_cast<std::uint32_t>(d.labels.size()));
    for (int y : d.labels) {
        const unsigned char b = static_cast<unsigned char>(y);
        labs.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!labs) throw std::runtime_error(labels_path + ": write failed");
}

Dataset synth_blobs(std::size_t classes, std::size_t n_per_class, std::size_t dims,
                    double separation, std::uint64_t seed) {
    if (classes == 0 || n_per_class == 0 || dims == 0)
        throw std::invalid_argument("synth_blobs: classes, counts and dims must be positive");
    if (separation <= 0.0) throw std::invalid_argument("synth_blobs: separation must be positive");
    // centers equally spaced on a circle in the first two coordinates
    // (a line when dims == 1), radius chosen so neighbours sit `separation` apart
    std::vector<std::vector<double>> centers(classes, std::vector<double>(dims, 0.0));
    if (classes > 1) {
        if (dims == 1) {
            for (std::size_t c = 0; c < classes; ++c) centers[c][0] = separation * c;
        } else {
            const double radius =
                separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(classes)));
            for (std::size_t c = 0; c < classes; ++c) {
                const double a = 2.0 * std::numbers::pi * c / static_cast<double>(classes);
                centers[c][0] = radius * std::cos(a);
                centers[c][1] = radius * std::sin(a);
            }
        }
    }

    const std::size_t n = classes * n_per_class;
    Dataset d;
    d.name = "blobs";
    d.images = Tensor({n, 1, 1, dims});
    d.labels.resize(n);
    d.classes = classes;
    double extent = 0.0;
    for (const auto& c : centers)
        for (double v : c) extent = std::max(extent, std::abs(v));
    d.lo = -(extent + 8.0);
    d.hi = extent + 8.0;

    std::mt19937_64 rng(mix_seed(seed, 0x62b0b5));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        d.labels[i] = static_cast<int>(c);
        for (std::size_t k = 0; k < dims; ++k)
            d.images[i * dims + k] = std::clamp(centers[c][k] + noise(rng), d.lo, d.hi);
    }
    d.check();
    return d;
}

namespace {

// 5x7 digit glyphs; rows top to bottom, bit 4 = leftmost column
constexpr unsigned char kGlyphs[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

double glyph_at(int digit, double gy, double gx) {
    // bilinear sample of the glyph bitmap, zero outside
    const int y0 = static_cast<int>(std::floor(gy));
    const int x0 = static_cast<int>(std::floor(gx));
    const double fy = gy - y0, fx = gx - x0;
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
            const int y = y0 + dy, x = x0 + dx;
            if (y < 0 || y >= 7 || x < 0 || x >= 5) continue;
            const double cell = (kGlyphs[digit][y] >> (4 - x)) & 1 ? 1.0 : 0.0;
            acc += cell * (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
        }
    return acc;
}

}  // namespace

Dataset synth_digits(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("synth_digits: need at least one image");
    const std::size_t H = 28, W = 28;
    Dataset d;
    d.name = "digits";
    d.images = Tensor({n, 1, H, W});
    d.labels.resize(n);
    d.classes = 10;
    for (std::size_t i = 0; i < n; ++i) {
        const int digit = static_cast<int>(i % 10);
        d.labels[i] = digit;
        std::mt19937_64 rng(mix_seed(seed, i));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        const double scale_y = 2.4 + 0.5 * u01(rng);   // glyph cell size in pixels
        const double scale_x = 2.4 + 0.5 * u01(rng);
        const double theta = -0.12 + 0.24 * u01(rng);  // radians
        const double shift_y = -2.0 + 4.0 * u01(rng);
        const double shift_x = -2.0 + 4.0 * u01(rng);
        const double contrast = 0.85 + 0.15 * u01(rng);
        std::normal_distribution<double> noise(0.0, 0.02);
        const double cy = H / 2.0 + shift_y, cx = W / 2.0 + shift_x;
        const double c = std::cos(theta), s = std::sin(theta);
        double* img = d.images.data() + i * H * W;
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t col = 0; col < W; ++col) {
                const double py = static_cast<double>(r) - cy;
                const double px = static_cast<double>(col) - cx;
                // rotate, then express in glyph cell units centered on the bitmap
                const double gy = (c * py - s * px) / scale_y + 3.5 - 0.5;
                const double gx = (s * py + c * px) / scale_x + 2.5 - 0.5;
                // Squash the interpolated coverage toward {0,1}: saturated
                // strokes on empty background keep the classes separable
                // even under sizeable per-pixel perturbations.
                double t = std::clamp((glyph_at(digit, gy, gx) - 0.35) / 0.2, 0.0, 1.0);
                t = t * t * (3.0 - 2.0 * t);
                double v = contrast * t + noise(rng);
                v = std::clamp(v, 0.0, 1.0);
                img[r * W + col] = std::round(v * 255.0) / 255.0;
            }
    }
    d.check();
    return d;
}

Dataset subset(const Dataset& d, std::size_t n, std::uint64_t seed) {
    if (n > d.size())
        throw std::invalid_argument("subset: requested " + std::to_string(n) + " of " +
                                    std::to_string(d.size()));
    // per-class quotas by largest remainder, then a seeded draw within class
    std::vector<std::vector<std::size_t>> by_class(d.classes);
    for (std::size_t i = 0; i < d.size(); ++i) by_class[d.labels[i]].push_back(i);
    std::vector<std::size_t> quota(d.classes, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < d.classes; ++c) {
        const double exact =
            static_cast<double>(n) * static_cast<double>(by_class[c].size()) / d.size();
        quota[c] = static_cast<std::size_t>(exact);
        assigned += quota[c];
        remainders.emplace_back(-(exact - static_cast<double>(quota[c])), c);
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t k = 0; assigned < n; ++k) {
        const std::size_t c = remainders[k % remainders.size()].second;
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    std::vector<std::size_t> picked;
    picked.reserve(n);
    for (std::size_t c = 0; c < d.classes; ++c) {
        auto& pool = by_class[c];
        std::mt19937_64 rng(mix_seed(seed, 0x5eb5e7 + c));
        std::shuffle(pool.begin(), pool.end(), rng);
        picked.insert(picked.end(), pool.begin(), pool.begin() + quota[c]);
    }
    std::sort(picked.begin(), picked.end());

    Dataset out;
    out.name = d.name + "/subset" + std::to_string(n);
    const std::size_t chw = d.images.numel() / d.images.dim(0);
    out.images = Tensor({n, d.images.dim(1), d.images.dim(2), d.images.dim(3)});
    out.labels.resize(n);
    out.lo = d.lo;
    out.hi = d.hi;
    out.classes = d.classes;
    for (std::size_t k = 0; k < n; ++k) {
        std::copy(d.images.data() + picked[k] * chw, d.images.data() + (picked[k] + 1) * chw,
                  out.images.data() + k * chw);
        out.labels[k] = d.labels[picked[k]];
    }
    return out;
}

Tensor batch_images(const Dataset& d, std::size_t start, std::size_t count) {
    if (start + count > d.size())
        throw std::invalid_argument("batch_images: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") exceeds dataset size " +
                                    std::to_string(d.size()));
    const std::size_t chw = d.images.numel() / d.images.dim(0);
    Tensor out({count, d.images.dim(1), d.images.dim(2), d.images.dim(3)});
    std::copy(d.images.data() + start * chw, d.images.data() + (start + count) * chw, out.data());
    return out;
}

std::vector<int> batch_labels(const Dataset& d, std::size_t start, std::size_t count) {
    if (start + count > d.size())
        throw std::invalid_argument("batch_labels: range exceeds dataset size");
    return std::vector<int>(d.labels.begin() + start, d.labels.begin() + start + count);
}

}  // namespace sadv
