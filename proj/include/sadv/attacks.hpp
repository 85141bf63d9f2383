#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sadv/model.hpp"
#include "sadv/spectral.hpp"
#include "sadv/tensor.hpp"

namespace sadv {

enum class AttackMethod { FGSM, PGD, MomentumPGD, SPGD, NoSignPGD };

AttackMethod parse_attack_method(const std::string& name);
const char* attack_method_name(AttackMethod m);

struct AttackConfig {
    AttackMethod method = AttackMethod::PGD;
    double epsilon = 0.3;      // l-inf budget; 0 is the degenerate threat model
    double step_size = 0.01;   // alpha
    std::size_t steps = 20;    // R
    double momentum = 0.0;     // mu, blended as delta*mu + grad*(1-mu)
    bool random_init = true;
    double lo = 0.0, hi = 1.0;  // valid value range
    std::uint64_t seed = 0;
    /// The published listing computes a gradient before the first step and
    /// seeds the momentum buffer with it; false discards that seed gradient
    /// and starts the buffer from the first in-loop gradient instead.
    bool blend_from_step0 = true;

    void validate() const;
};

/// One recorded attack step: the projected batch, its mean loss, and a
/// per-sample correctness mask (1 = still classified correctly).
struct AttackStep {
    Tensor x_adv{Shape{1}};
    double mean_loss = 0.0;
    std::vector<std::uint8_t> correct;
};

struct PerturbationTrace {
    Tensor x_nat{Shape{1}};
    std::vector<AttackStep> steps;  // steps[k] holds attack step k+1

    /// Flattened perturbation components x_adv - x_nat at a given step.
    std::vector<double> components(std::size_t step_index) const;
};

/// Component-wise projection into the l-inf ball around x_nat intersected
/// with the value range: clip the perturbation to [-eps, eps], re-add, clip
/// to [lo, hi]. Points already inside come back unchanged.
Tensor project(const Tensor& x_nat, const Tensor& candidate, double epsilon, double lo, double hi);

/// x_nat + U(-eps, eps) noise, value-range clipped; eps = 0 returns x_nat.
Tensor random_init(const Tensor& x_nat, double epsilon, double lo, double hi, std::uint64_t seed);

/// Streaming observer for attack steps (1-based step index, projected batch,
/// mean loss, correctness mask). Loss and correctness are measured at the
/// projected point of that step.
using StepSink =
    std::function<void(std::size_t, const Tensor&, double, const std::vector<std::uint8_t>&)>;

/// Pixel-domain driver for PGD / MomentumPGD / NoSignPGD (FGSM runs as
/// single-step PGD). `m` must be a pixel-domain binding at the batch size.
void run_pixel_attack(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                      const AttackConfig& cfg, const StepSink& sink);

/// Frequency-domain driver: ascent on transform coefficients with momentum,
/// projecting in pixel space every step. `m` must be a frequency-domain
/// binding at the batch size.
void run_spectral_attack(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                         const AttackConfig& cfg, const SpectralPlan& plan, const StepSink& sink);

Tensor fgsm(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
            const AttackConfig& cfg);
PerturbationTrace pgd(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                      const AttackConfig& cfg);
PerturbationTrace momentum_pgd(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                               const AttackConfig& cfg);
PerturbationTrace nosign_pgd(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                             const AttackConfig& cfg);
PerturbationTrace spgd(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                       const AttackConfig& cfg, const SpectralPlan& plan);

/// Step-size selection: runs the configured attack once per candidate on the
/// given batch and returns the candidate with the lowest final adversarial
/// accuracy; ties break toward the smaller step size.
double search_step_size(BoundModel& m, BoundModel* freq_m, const SpectralPlan* plan,
                        const Tensor& x_nat, const std::vector<int>& y, const AttackConfig& cfg,
                        const std::vector<double>& candidates);

}  // namespace sadv
