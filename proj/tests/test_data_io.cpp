#include "sadv/data_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "doctest.h"

using namespace sadv;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("sadv_test_" + name);
}

Dataset tiny_dataset() {
    Dataset d;
    d.name = "tiny";
    d.images = Tensor({2, 1, 2, 2}, {0.0, 1.0, 8.0 / 255.0, 255.0 / 255.0,  //
                                     1.0, 0.0, 128.0 / 255.0, 7.0 / 255.0});
    d.labels = {3, 9};
    d.classes = 10;
    return d;
}

}  // namespace

TEST_CASE("idx round trip preserves byte-quantized pixels and labels") {
    const auto ip = temp_file("rt_images.idx"), lp = temp_file("rt_labels.idx");
    Dataset d = tiny_dataset();
    save_idx(d, ip.string(), lp.string());
    Dataset back = load_idx(ip.string(), lp.string());
    REQUIRE(back.size() == 2);
    CHECK(back.images.dim(2) == 2);
    for (std::size_t i = 0; i < d.images.numel(); ++i) CHECK(back.images[i] == d.images[i]);
    CHECK(back.labels == d.labels);
    CHECK(back.images[0] == 0.0);
    CHECK(back.images[1] == 1.0);
    std::filesystem::remove(ip);
    std::filesystem::remove(lp);
}

TEST_CASE("idx loader rejects wrong magic") {
    const auto ip = temp_file("wm_images.idx"), lp = temp_file("wm_labels.idx");
    save_idx(tiny_dataset(), ip.string(), lp.string());
    // feed the label file where images are expected and vice versa
    CHECK_THROWS_WITH_AS(load_idx(lp.string(), ip.string()),
                         doctest::Contains("wrong magic"), std::runtime_error);
    std::filesystem::remove(ip);
    std::filesystem::remove(lp);
}

TEST_CASE("idx loader rejects truncated files") {
    const auto ip = temp_file("tr_images.idx"), lp = temp_file("tr_labels.idx");
    save_idx(tiny_dataset(), ip.string(), lp.string());
    // chop the image payload short
    const auto full = std::filesystem::file_size(ip);
    std::filesystem::resize_file(ip, full - 3);
    CHECK_THROWS_WITH_AS(load_idx(ip.string(), lp.string()), doctest::Contains("truncated"),
                         std::runtime_error);
    std::filesystem::remove(ip);
    std::filesystem::remove(lp);
}

TEST_CASE("idx loader rejects image/label count mismatch") {
    const auto ip = temp_file("cm_images.idx"), lp = temp_file("cm_labels.idx");
    const auto lp3 = temp_file("cm_labels3.idx");
    save_idx(tiny_dataset(), ip.string(), lp.string());
    Dataset three = tiny_dataset();
    three.images = Tensor({3, 1, 2, 2});
    three.labels = {1, 2, 3};
    save_idx(three, temp_file("cm_scratch.idx").string(), lp3.string());
    CHECK_THROWS_WITH_AS(load_idx(ip.string(), lp3.string()), doctest::Contains("does not match"),
                         std::runtime_error);
    std::filesystem::remove(ip);
    std::filesystem::remove(lp);
    std::filesystem::remove(lp3);
    std::filesystem::remove(temp_file("cm_scratch.idx"));
}

TEST_CASE("blobs are deterministic and separable") {
    Dataset a = synth_blobs(2, 50, 2, 100.0, 7);
    Dataset b = synth_blobs(2, 50, 2, 100.0, 7);
    for (std::size_t i = 0; i < a.images.numel(); ++i) CHECK(a.images[i] == b.images[i]);
    CHECK(a.labels == b.labels);
    CHECK(a.images.dim(0) == 100);
    CHECK(a.images.dim(3) == 2);

    // nearest centroid classifies perfectly at separation 100
    double cx[2][2] = {{0, 0}, {0, 0}};
    std::size_t cnt[2] = {0, 0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        cx[a.labels[i]][0] += a.images[i * 2];
        cx[a.labels[i]][1] += a.images[i * 2 + 1];
        ++cnt[a.labels[i]];
    }
    for (int c = 0; c < 2; ++c) {
        cx[c][0] /= static_cast<double>(cnt[c]);
        cx[c][1] /= static_cast<double>(cnt[c]);
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d0 = std::hypot(a.images[i * 2] - cx[0][0], a.images[i * 2 + 1] - cx[0][1]);
        double d1 = std::hypot(a.images[i * 2] - cx[1][0], a.images[i * 2 + 1] - cx[1][1]);
        CHECK((d0 < d1 ? 0 : 1) == a.labels[i]);
    }
}

TEST_CASE("blobs with a different seed differ") {
    Dataset a = synth_blobs(3, 10, 4, 5.0, 1);
    Dataset b = synth_blobs(3, 10, 4, 5.0, 2);
    CHECK(max_abs_diff(a.images, b.images) > 0.0);
}

TEST_CASE("subset keeps content order, stratifies, and is deterministic") {
    Dataset d = synth_digits(200, 11);
    Dataset all = subset(d, 200, 5);
    for (std::size_t i = 0; i < d.images.numel(); ++i) CHECK(all.images[i] == d.images[i]);
    CHECK(all.labels == d.labels);

    Dataset ten = subset(d, 10, 5);
    std::set<int> seen(ten.labels.begin(), ten.labels.end());
    CHECK(seen.size() == 10);  // exactly one per class on a balanced source

    Dataset again = subset(d, 10, 5);
    CHECK(ten.labels == again.labels);
    for (std::size_t i = 0; i < ten.images.numel(); ++i) CHECK(ten.images[i] == again.images[i]);

    Dataset other = subset(d, 10, 6);
    bool different = other.labels != ten.labels ||
                     max_abs_diff(other.images, ten.images) > 0.0;
    CHECK(different);

    CHECK_THROWS_AS(subset(d, 201, 5), std::invalid_argument);
}

TEST_CASE("subset proportions stay within one item per class") {
    // unbalanced source: 30 of class 0, 10 of class 1
    Dataset d;
    d.name = "unbalanced";
    d.images = Tensor({40, 1, 1, 1});
    d.classes = 2;
    for (std::size_t i = 0; i < 40; ++i) d.labels.push_back(i < 30 ? 0 : 1);
    Dataset s = subset(d, 20, 3);
    std::size_t c0 = 0;
    for (int y : s.labels) c0 += y == 0;
    CHECK(c0 >= 14);  // exact proportion would be 15
    CHECK(c0 <= 16);
    CHECK(s.size() == 20);
}

TEST_CASE("synthetic digits are deterministic, quantized, balanced and in range") {
    Dataset a = synth_digits(100, 42);
    Dataset b = synth_digits(100, 42);
    for (std::size_t i = 0; i < a.images.numel(); ++i) CHECK(a.images[i] == b.images[i]);
    CHECK(a.images.dim(2) == 28);
    CHECK(a.images.dim(3) == 28);

    std::size_t per_class[10] = {};
    for (int y : a.labels) ++per_class[y];
    for (std::size_t c = 0; c < 10; ++c) CHECK(per_class[c] == 10);

    for (std::size_t i = 0; i < a.images.numel(); ++i) {
        CHECK(a.images[i] >= 0.0);
        CHECK(a.images[i] <= 1.0);
        const double steps = a.images[i] * 255.0;
        CHECK(std::abs(steps - std::round(steps)) < 1e-9);
    }
    CHECK_NOTHROW(a.check());

    Dataset c = synth_digits(100, 43);
    CHECK(max_abs_diff(a.images, c.images) > 0.0);
}

TEST_CASE("batch slicing returns contiguous views and validates bounds") {
    Dataset d = synth_digits(30, 3);
    Tensor x = batch_images(d, 10, 5);
    std::vector<int> y = batch_labels(d, 10, 5);
    CHECK(x.dim(0) == 5);
    CHECK(y.size() == 5);
    const std::size_t chw = 28 * 28;
    for (std::size_t i = 0; i < 5 * chw; ++i) CHECK(x[i] == d.images[10 * chw + i]);
    for (std::size_t i = 0; i < 5; ++i) CHECK(y[i] == d.labels[10 + i]);
    CHECK_THROWS_AS(batch_images(d, 28, 5), std::invalid_argument);
    CHECK_THROWS_AS(batch_labels(d, 28, 5), std::invalid_argument);
}
