#include "sadv/tensor.hpp"

#include <limits>
#include <stdexcept>

#include "doctest.h"

using namespace sadv;

TEST_CASE("tensor construction and accessors") {
    Tensor t({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.numel() == 6);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(1) == 3);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);

    Tensor v({2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(v[3] == 4.0);
    CHECK(shape_str(v.shape()) == "[2,2]");
}

TEST_CASE("tensor rejects malformed shapes and data") {
    CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    Tensor t({2, 3});
    CHECK_THROWS_AS(t.reshaped({4}), std::invalid_argument);
}

TEST_CASE("tensor reshape preserves data") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = t.reshaped({3, 2});
    CHECK(r.dim(0) == 3);
    for (std::size_t i = 0; i < 6; ++i) CHECK(r[i] == t[i]);
}

TEST_CASE("tensor scalar and fill helpers") {
    Tensor s = Tensor::scalar(2.5);
    CHECK(s.numel() == 1);
    CHECK(s[0] == 2.5);
    Tensor f = Tensor::full({2, 2}, -1.0);
    CHECK(f[3] == -1.0);
    f.fill(0.25);
    CHECK(f[0] == 0.25);
}

TEST_CASE("tensor difference metrics") {
    Tensor a({3}, {1.0, -2.0, 0.5});
    Tensor b({3}, {1.0, -2.5, 0.5});
    CHECK(max_abs(a) == 2.0);
    CHECK(max_abs_diff(a, b) == 0.5);
    CHECK(max_rel_diff(a, b) == doctest::Approx(0.5 / 2.5));
    CHECK(max_rel_diff(a, a) == 0.0);
    CHECK(l2_norm(Tensor({2}, {3.0, 4.0})) == 5.0);
}

TEST_CASE("tensor finiteness scan") {
    Tensor a({2}, {1.0, 2.0});
    CHECK(a.all_finite());
    a[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(a.all_finite());
    a[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(a.all_finite());
}
