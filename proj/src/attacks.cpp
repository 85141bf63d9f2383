#include "sadv/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace sadv {

AttackMethod parse_attack_method(const std::string& name) {
    if (name == "fgsm") return AttackMethod::FGSM;
    if (name == "pgd") return AttackMethod::PGD;
    if (name == "momentum_pgd") return AttackMethod::MomentumPGD;
    if (name == "spgd") return AttackMethod::SPGD;
    if (name == "nosign_pgd") return AttackMethod::NoSignPGD;
    throw std::invalid_argument("unknown attack method '" + name + "'");
}

const char* attack_method_name(AttackMethod m) {
    switch (m) {
        case AttackMethod::FGSM: return "fgsm";
        case AttackMethod::PGD: return "pgd";
        case AttackMethod::MomentumPGD: return "momentum_pgd";
        case AttackMethod::SPGD: return "spgd";
        case AttackMethod::NoSignPGD: return "nosign_pgd";
    }
    return "?";
}

void AttackConfig::validate() const {
    if (epsilon < 0.0) throw std::invalid_argument("attack: epsilon must be non-negative");
    if (step_size < 0.0) throw std::invalid_argument("attack: step size must be non-negative");
    if (steps < 1) throw std::invalid_argument("attack: need at least one step");
    if (momentum < 0.0 || momentum > 1.0)
        throw std::invalid_argument("attack: momentum must lie in [0, 1]");
    if (!(lo < hi)) throw std::invalid_argument("attack: value range low must be below high");
    if (method == AttackMethod::FGSM && steps != 1)
        throw std::invalid_argument("attack: fgsm is single-step; got steps=" +
                                    std::to_string(steps));
    if (method == AttackMethod::PGD && momentum != 0.0)
        throw std::invalid_argument("attack: pgd has no momentum; use momentum_pgd");
}

std::vector<double> PerturbationTrace::components(std::size_t step_index) const {
    if (step_index >= steps.size())
        throw std::invalid_argument("trace: step " + std::to_string(step_index) +
                                    " out of range");
    const Tensor& xa = steps[step_index].x_adv;
    std::vector<double> out(xa.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xa[i] - x_nat[i];
    return out;
}

Tensor project(const Tensor& x_nat, const Tensor& candidate, double epsilon, double lo,
               double hi) {
    if (!x_nat.same_shape(candidate))
        throw std::invalid_argument("project: shape mismatch " + shape_str(x_nat.shape()) +
                                    " vs " + shape_str(candidate.shape()));
    if (epsilon < 0.0) throw std::invalid_argument("project: epsilon must be non-negative");
    Tensor out(x_nat.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double d = std::clamp(candidate[i] - x_nat[i], -epsilon, epsilon);
        out[i] = std::clamp(x_nat[i] + d, lo, hi);
    }
    return out;
}

Tensor random_init(const Tensor& x_nat, double epsilon, double lo, double hi,
                   std::uint64_t seed) {
    if (epsilon < 0.0) throw std::invalid_argument("random_init: epsilon must be non-negative");
    Tensor out = x_nat;
    if (epsilon == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-epsilon, epsilon);
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = std::clamp(x_nat[i] + noise(rng), lo, hi);
    return out;
}

namespace {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<std::uint8_t> correctness(const BoundModel& m, const std::vector<int>& y) {
    const std::vector<int> pred = m.predictions();
    std::vector<std::uint8_t> out(pred.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pred[i] == y[i] ? 1 : 0;
    return out;
}

}  // namespace

void run_pixel_attack(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                      const AttackConfig& cfg, const StepSink& sink) {
    cfg.validate();
    if (m.frequency_domain)
        throw std::invalid_argument("pixel attack needs a pixel-domain model binding");
    const bool with_momentum =
        cfg.method == AttackMethod::MomentumPGD || cfg.method == AttackMethod::NoSignPGD;
    const bool signed_step =
        cfg.method == AttackMethod::PGD || cfg.method == AttackMethod::FGSM ||
        cfg.method == AttackMethod::MomentumPGD;
    if (cfg.method == AttackMethod::SPGD)
        throw std::invalid_argument("spectral attack must run through run_spectral_attack");

    Tensor x = cfg.random_init ? random_init(x_nat, cfg.epsilon, cfg.lo, cfg.hi, cfg.seed)
                               : x_nat;
    const std::vector<int> wanted{m.input};

    Tensor delta;  // momentum buffer over raw gradients
    bool delta_ready = false;
    if (with_momentum && cfg.blend_from_step0) {
        m.set_batch(x, y);
        m.forward_loss();
        m.graph.backward(m.loss, wanted);
        delta = m.graph.adjoint(m.input);
        delta_ready = true;
    }

    double loss_prev = 0.0;
    std::vector<std::uint8_t> correct_prev;
    for (std::size_t i = 1; i <= cfg.steps; ++i) {
        m.set_batch(x, y);
        loss_prev = m.forward_loss();
        correct_prev = correctness(m, y);
        if (i >= 2) sink(i - 1, x, loss_prev, correct_prev);
        m.graph.backward(m.loss, wanted);
        const Tensor& g = m.graph.adjoint(m.input);

        const Tensor* dir = &g;
        if (with_momentum) {
            if (!delta_ready) {
                delta = g;
                delta_ready = true;
            } else {
                for (std::size_t j = 0; j < delta.numel(); ++j)
                    delta[j] = delta[j] * cfg.momentum + g[j] * (1.0 - cfg.momentum);
            }
            dir = &delta;
        }

        Tensor cand(x.shape());
        if (signed_step)
            for (std::size_t j = 0; j < cand.numel(); ++j)
                cand[j] = x[j] + cfg.step_size * sign((*dir)[j]);
        else
            for (std::size_t j = 0; j < cand.numel(); ++j)
                cand[j] = x[j] + cfg.step_size * (*dir)[j];
        x = project(x_nat, cand, cfg.epsilon, cfg.lo, cfg.hi);
    }

    m.set_batch(x, y);
    const double loss_final = m.forward_loss();
    sink(cfg.steps, x, loss_final, correctness(m, y));
}

void run_spectral_attack(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                         const AttackConfig& cfg, const SpectralPlan& plan,
                         const StepSink& sink) {
    cfg.validate();
    if (cfg.method != AttackMethod::SPGD)
        throw std::invalid_argument("run_spectral_attack expects the spectral method");
    if (!m.frequency_domain)
        throw std::invalid_argument("spectral attack needs a frequency-domain model binding");

    Tensor x = cfg.random_init ? random_init(x_nat, cfg.epsilon, cfg.lo, cfg.hi, cfg.seed)
                               : x_nat;
    Tensor z = plan.dct2(x);
    const std::vector<int> wanted{m.input};

    Tensor delta;  // momentum buffer over raw coefficient gradients
    bool delta_ready = false;
    if (cfg.blend_from_step0) {
        m.set_batch(z, y);
        m.forward_loss();
        m.graph.backward(m.loss, wanted);
        delta = m.graph.adjoint(m.input);
        delta_ready = true;
    }

    for (std::size_t i = 1; i <= cfg.steps; ++i) {
        m.set_batch(z, y);
        const double loss_prev = m.forward_loss();
        if (i >= 2) sink(i - 1, x, loss_prev, correctness(m, y));
        m.graph.backward(m.loss, wanted);
        const Tensor& g = m.graph.adjoint(m.input);

        if (!delta_ready) {
            delta = g;
            delta_ready = true;
        } else {
            for (std::size_t j = 0; j < delta.numel(); ++j)
                delta[j] = delta[j] * cfg.momentum + g[j] * (1.0 - cfg.momentum);
        }

        for (std::size_t j = 0; j < z.numel(); ++j) z[j] += cfg.step_size * delta[j];
        x = project(x_nat, plan.idct2(z), cfg.epsilon, cfg.lo, cfg.hi);
        z = plan.dct2(x);
    }

    m.set_batch(z, y);
    const double loss_final = m.forward_loss();
    sink(cfg.steps, x, loss_final, correctness(m, y));
}

namespace {

PerturbationTrace collect_trace(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                                const AttackConfig& cfg, const SpectralPlan* plan) {
    PerturbationTrace trace;
    trace.x_nat = x_nat;
    trace.steps.resize(cfg.steps);
    auto sink = [&trace](std::size_t step, const Tensor& x, double loss,
                         const std::vector<std::uint8_t>& correct) {
        AttackStep& s = trace.steps[step - 1];
        s.x_adv = x;
        s.mean_loss = loss;
        s.correct = correct;
    };
    if (plan)
        run_spectral_attack(m, x_nat, y, cfg, *plan, sink);
    else
        run_pixel_attack(m, x_nat, y, cfg, sink);
    return trace;
}

}  // namespace

Tensor fgsm(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
            const AttackConfig& cfg) {
    if (cfg.method != AttackMethod::FGSM)
        throw std::invalid_argument("fgsm: config method mismatch");
    return collect_trace(m, x_nat, y, cfg, nullptr).steps.back().x_adv;
}

PerturbationTrace pgd(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                      const AttackConfig& cfg) {
    if (cfg.method != AttackMethod::PGD)
        throw std::invalid_argument("pgd: config method mismatch");
    return collect_trace(m, x_nat, y, cfg, nullptr);
}

PerturbationTrace momentum_pgd(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                               const AttackConfig& cfg) {
    if (cfg.method != AttackMethod::MomentumPGD)
        throw std::invalid_argument("momentum_pgd: config method mismatch");
    return collect_trace(m, x_nat, y, cfg, nullptr);
}

PerturbationTrace nosign_pgd(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                             const AttackConfig& cfg) {
    if (cfg.method != AttackMethod::NoSignPGD)
        throw std::invalid_argument("nosign_pgd: config method mismatch");
    return collect_trace(m, x_nat, y, cfg, nullptr);
}

PerturbationTrace spgd(BoundModel& m, const Tensor& x_nat, const std::vector<int>& y,
                       const AttackConfig& cfg, const SpectralPlan& plan) {
    if (cfg.method != AttackMethod::SPGD)
        throw std::invalid_argument("spgd: config method mismatch");
    return collect_trace(m, x_nat, y, cfg, &plan);
}

double search_step_size(BoundModel& m, BoundModel* freq_m, const SpectralPlan* plan,
                        const Tensor& x_nat, const std::vector<int>& y, const AttackConfig& cfg,
                        const std::vector<double>& candidates) {
    if (candidates.empty())
        throw std::invalid_argument("search_step_size: no candidates supplied");
    for (double a : candidates)
        if (a < 0.0) throw std::invalid_argument("search_step_size: negative step size");

    double best_alpha = 0.0;
    double best_acc = std::numeric_limits<double>::infinity();
    std::vector<double> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());  // ties resolve toward smaller alpha
    for (double alpha : sorted) {
        AttackConfig c = cfg;
        c.step_size = alpha;
        std::size_t hits = 0;
        auto sink = [&hits, &c](std::size_t step, const Tensor&, double,
                                const std::vector<std::uint8_t>& correct) {
            if (step != c.steps) return;
            for (std::uint8_t v : correct) hits += v;
        };
        if (c.method == AttackMethod::SPGD) {
            if (!freq_m || !plan)
                throw std::invalid_argument(
                    "search_step_size: spectral method needs a frequency binding and plan");
            run_spectral_attack(*freq_m, x_nat, y, c, *plan, sink);
        } else {
            run_pixel_attack(m, x_nat, y, c, sink);
        }
        const double acc = static_cast<double>(hits) / static_cast<double>(y.size());
        if (acc < best_acc) {
            best_acc = acc;
            best_alpha = alpha;
        }
    }
    return best_alpha;
}

}  // namespace sadv
