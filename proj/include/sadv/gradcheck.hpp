#pragma once

#include <cstddef>

#include "sadv/graph.hpp"

namespace sadv {

/// Central-difference gradient of the scalar `output` with respect to the
/// value bound at `input`, probing every coordinate. Quadratic cost; meant
/// for small graphs and spot checks.
Tensor finite_diff_gradient(Graph& g, int output, int input, double h = 1e-5);

struct GradCheck {
    double max_rel_err = 0.0;      // worst coordinate, symmetric denominator
    double min_kink_margin = 0.0;  // smallest ReLU / pool margin seen while probing
    std::size_t checked = 0;
    std::size_t skipped = 0;  // probe pairs that straddled a kink
};

/// Compares reverse-mode gradients against central differences on up to
/// `max_coords` evenly strided coordinates of `input`. A coordinate is
/// skipped when its two probes land in different piecewise-linear regions
/// (different ReLU signs or pool winners): the difference quotient straddles
/// a non-differentiable point there and says nothing about the backward pass.
GradCheck gradient_check(Graph& g, int output, int input, double h = 1e-5,
                         std::size_t max_coords = 64);

}  // namespace sadv
