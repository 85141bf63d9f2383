#include "sadv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace sadv {

namespace {

double probe(Graph& g, int output, int input, Tensor& point, std::size_t i, double v,
             double& margin, std::uint64_t& signature) {
    const double saved = point[i];
    point[i] = v;
    g.set_input(input, point);
    double f = g.forward(output)[0];
    margin = std::min(margin, g.kink_margin());
    signature = g.activation_signature();
    point[i] = saved;
    return f;
}

}  // namespace

Tensor finite_diff_gradient(Graph& g, int output, int input, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_gradient: step must be positive");
    Tensor point = g.value(input);
    Tensor grad(point.shape());
    double margin = std::numeric_limits<double>::infinity();
    std::uint64_t sig = 0;
    for (std::size_t i = 0; i < point.numel(); ++i) {
        const double fp = probe(g, output, input, point, i, point[i] + h, margin, sig);
        const double fm = probe(g, output, input, point, i, point[i] - h, margin, sig);
        grad[i] = (fp - fm) / (2.0 * h);
    }
    g.set_input(input, point);
    g.forward(output);
    return grad;
}

GradCheck gradient_check(Graph& g, int output, int input, double h, std::size_t max_coords) {
    if (h <= 0.0) throw std::invalid_argument("gradient_check: step must be positive");
    Tensor point = g.value(input);
    g.forward(output);
    g.backward(output, {input});
    const Tensor ad = g.adjoint(input);

    GradCheck result;
    result.min_kink_margin = std::numeric_limits<double>::infinity();
    const std::size_t n = point.numel();
    const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::size_t>(1, max_coords));
    for (std::size_t i = 0; i < n; i += stride) {
        std::uint64_t sig_p = 0, sig_m = 0;
        const double fp =
            probe(g, output, input, point, i, point[i] + h, result.min_kink_margin, sig_p);
        const double fm =
            probe(g, output, input, point, i, point[i] - h, result.min_kink_margin, sig_m);
        if (sig_p != sig_m) {
            ++result.skipped;
            continue;
        }
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(ad[i]), std::abs(fd), 1e-6});
        result.max_rel_err = std::max(result.max_rel_err, std::abs(ad[i] - fd) / denom);
        ++result.checked;
    }
    g.set_input(input, point);
    g.forward(output);
    return result;
}

}  // namespace sadv
