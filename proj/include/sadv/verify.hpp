#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sadv/data_io.hpp"
#include "sadv/model.hpp"

namespace sadv {

struct CheckResult {
    std::string name;
    double max_err = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct VerifyOptions {
    std::size_t batch = 8;             // images behind the data-driven checks
    std::size_t trajectory_steps = 10; // attack length for the equivalence check
    double fd_step = 1e-5;             // central-difference probe size
    /// Negative control: perturbs one cosine-basis entry before the
    /// transform checks, which must then fail. Proves the checks have teeth.
    bool corrupt_dct_basis = false;
};

/// Runs the numerical guarantees behind the frequency-domain attack on the
/// given model and data:
///   dct-orthogonality        BᵀB = I for both spatial axes
///   dct-round-trip           inverse(forward(x)) = x on real images
///   gradient-transport       coefficient gradient = transform of pixel gradient
///   trajectory-equivalence   spectral ascent = unsigned pixel ascent, step by step
///   finite-difference-*      backward pass vs central differences
/// Thresholds are pinned here; every result quotes its max error.
std::vector<CheckResult> run_verification(const Model& m, const Dataset& d,
                                          const VerifyOptions& opt);

bool all_passed(const std::vector<CheckResult>& results);

/// Fixed-width human-readable table plus a one-line verdict.
std::string format_verification(const std::vector<CheckResult>& results);

}  // namespace sadv
