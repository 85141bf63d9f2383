#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sadv/attacks.hpp"
#include "sadv/data_io.hpp"
#include "sadv/model.hpp"
#include "sadv/spectral.hpp"

namespace sadv {

struct Histogram {
    std::string method;
    std::size_t step = 0;  // 1-based attack step
    double epsilon = 0.0;
    std::vector<double> edges;        // bins + 1, strictly ascending
    std::vector<std::size_t> counts;  // one per bin; sums to the component count
};

/// Per-step histograms of the flattened perturbation components over
/// [-1.25 eps, 1.25 eps], so boundary mass at +-eps stays interior.
std::vector<Histogram> component_histograms(const PerturbationTrace& trace, std::size_t bins,
                                            double epsilon, const std::string& method);

/// Exact fraction of perturbation components with |delta| strictly below
/// the threshold at the given (0-based) trace step.
double fraction_below(const PerturbationTrace& trace, std::size_t step_index,
                      double threshold);

struct GradientMaps {
    Tensor pixel_grad;  // [H,W], channel-summed raw gradient
    Tensor freq_grad;   // [H,W], gradient with respect to transform coefficients
};

/// Raw loss-gradient fields for one image, in both domains. The frequency
/// field comes from differentiating through the synthesis map, not from
/// transforming the pixel field, so the two routes can be compared.
GradientMaps gradient_heatmaps(const Model& m, const Tensor& x, int y,
                               const SpectralPlan& plan);

/// Energy fraction per frequency band; bands are quartiles of the Manhattan
/// index k1+k2 over the coefficient grid (count quantiles, ties downward).
std::array<double, 4> band_energies(const Tensor& freq_grad);

struct StepTableRow {
    std::string method;
    std::size_t step = 0;
    double adversarial_accuracy = 0.0;
    double adversarial_loss = 0.0;
};

/// Per-step adversarial accuracy and mean loss for each named attack over
/// the same dataset; all attacks must share epsilon and value range.
std::vector<StepTableRow> attack_step_table(
    const Model& m, const Dataset& d,
    const std::vector<std::pair<std::string, AttackConfig>>& attacks, std::size_t batch_size);

struct SecurityCurve {
    std::string attack;
    std::string defense_model;
    std::vector<double> epsilons;
    std::vector<double> accuracies;
};

/// Adversarial accuracy per budget; the grid must be ascending and start at
/// 0, whose entry is computed without any attack.
SecurityCurve security_curve(const Model& m, const Dataset& d, const AttackConfig& tmpl,
                             const std::vector<double>& epsilons, std::size_t batch_size,
                             const std::string& attack_label, const std::string& model_label);

/// CSV emitters: comma-separated, one header row, LF endings, reals printed
/// with 17 significant digits so they parse back bit-exactly.
void write_step_table_csv(const std::vector<StepTableRow>& rows, const std::string& path);
void write_security_curve_csv(const SecurityCurve& curve, const std::string& path);
void write_histogram_csv(const std::vector<Histogram>& histograms, const std::string& path);
SecurityCurve read_security_curve_csv(const std::string& path);

/// Standalone vector-graphic renderings: histogram bars and a per-cell
/// heatmap with a symmetric diverging scale centered at zero.
void write_histogram_svg(const Histogram& h, const std::string& path);
void write_heatmap_svg(const Tensor& field, const std::string& path);

}  // namespace sadv
