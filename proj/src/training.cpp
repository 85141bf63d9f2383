#include "sadv/training.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>

#include "sadv/checkpoint.hpp"
#include "sadv/rng.hpp"
#include "sadv/spectral.hpp"

namespace sadv {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train: need at least one epoch");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
    if (learning_rate < 0.0)
        throw std::invalid_argument("train: learning rate must be non-negative");
    if (sgd_momentum < 0.0 || sgd_momentum > 1.0)
        throw std::invalid_argument("train: sgd momentum must lie in [0, 1]");
    if (attack) attack->validate();
}

namespace {

constexpr std::uint64_t kShuffleTag = 0x5AFF1E;
constexpr std::uint64_t kAttackTag = 0xA77AC4;

void check_input_shape(const Model& m, const Dataset& d, const char* what) {
    const Tensor& x = d.images;
    if (x.rank() != 4 || x.dim(1) != m.spec.in_c || x.dim(2) != m.spec.in_h ||
        x.dim(3) != m.spec.in_w)
        throw std::invalid_argument(std::string(what) + ": images " + shape_str(x.shape()) +
                                    " do not fit model input [N," +
                                    std::to_string(m.spec.in_c) + "," +
                                    std::to_string(m.spec.in_h) + "," +
                                    std::to_string(m.spec.in_w) + "]");
}

Tensor gather_images(const Dataset& d, const std::vector<std::size_t>& order,
                     std::size_t start, std::size_t count) {
    const std::size_t px = d.images.numel() / d.size();
    Tensor out(Shape{count, d.images.dim(1), d.images.dim(2), d.images.dim(3)});
    for (std::size_t i = 0; i < count; ++i) {
        const double* src = d.images.data() + order[start + i] * px;
        std::copy(src, src + px, out.data() + i * px);
    }
    return out;
}

std::vector<int> gather_labels(const Dataset& d, const std::vector<std::size_t>& order,
                               std::size_t start, std::size_t count) {
    std::vector<int> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = d.labels[order[start + i]];
    return out;
}

std::size_t count_hits(const BoundModel& b, const std::vector<int>& y) {
    const std::vector<int> pred = b.predictions();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i] ? 1 : 0;
    return hits;
}

/// Runs the attack on one batch and keeps only the final step.
struct FinalStep {
    Tensor x_adv;
    double mean_loss = 0.0;
    std::size_t hits = 0;
};

FinalStep attack_batch(BoundModel& b, const SpectralPlan* plan, const Tensor& x,
                       const std::vector<int>& y, const AttackConfig& a) {
    FinalStep out;
    const auto sink = [&out, &a](std::size_t step, const Tensor& xa, double loss,
                                 const std::vector<std::uint8_t>& correct) {
        if (step != a.steps) return;
        out.x_adv = xa;
        out.mean_loss = loss;
        out.hits = 0;
        for (std::uint8_t v : correct) out.hits += v;
    };
    if (a.method == AttackMethod::SPGD)
        run_spectral_attack(b, x, y, a, *plan, sink);
    else
        run_pixel_attack(b, x, y, a, sink);
    return out;
}

TrainResult train_impl(Model model, const Dataset& train_set, const Dataset& eval_set,
                       const TrainConfig& cfg, bool adversarial) {
    cfg.validate();
    if (train_set.size() == 0) throw std::invalid_argument("train: training set is empty");
    if (eval_set.size() == 0) throw std::invalid_argument("train: evaluation set is empty");
    check_input_shape(model, train_set, "train");
    check_input_shape(model, eval_set, "train (eval)");

    const std::size_t n = train_set.size();
    const std::size_t bs = std::min(cfg.batch_size, n);
    const std::size_t rem = n % bs;

    BoundModel tb = bind_pixel(model, bs);
    std::optional<BoundModel> tb_rem;
    if (rem) tb_rem.emplace(bind_pixel(model, rem));

    std::optional<SpectralPlan> plan;
    std::optional<BoundModel> ab, ab_rem;
    if (adversarial) {
        if (cfg.attack->method == AttackMethod::SPGD) {
            plan.emplace(model.spec.in_h, model.spec.in_w);
            ab.emplace(bind_frequency(model, bs, *plan));
            if (rem) ab_rem.emplace(bind_frequency(model, rem, *plan));
        } else {
            ab.emplace(bind_pixel(model, bs));
            if (rem) ab_rem.emplace(bind_pixel(model, rem));
        }
    }

    std::vector<Tensor> velocity;
    velocity.reserve(model.params.size());
    for (const auto& [name, p] : model.params) velocity.emplace_back(Tensor(p.shape()));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, kShuffleTag));

    TrainResult out;
    std::uint64_t global_batch = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += bs, ++global_batch) {
            const std::size_t count = std::min(bs, n - start);
            Tensor x = gather_images(train_set, order, start, count);
            const std::vector<int> y = gather_labels(train_set, order, start, count);

            BoundModel& t = count == bs ? tb : *tb_rem;
            double loss = 0.0;
            try {
                if (adversarial) {
                    AttackConfig a = *cfg.attack;
                    a.seed = mix_seed(mix_seed(cfg.seed, kAttackTag), global_batch);
                    BoundModel& abm = count == bs ? *ab : *ab_rem;
                    abm.sync_params(model);
                    x = attack_batch(abm, plan ? &*plan : nullptr, x, y, a).x_adv;
                }
                t.sync_params(model);
                t.set_batch(x, y);
                loss = t.forward_loss();
                t.graph.backward(t.loss, t.param_nodes);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("training diverged (epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(start / bs) +
                                         "): " + e.what());
            }
            loss_sum += loss * static_cast<double>(count);

            for (std::size_t p = 0; p < model.params.size(); ++p) {
                const Tensor& g = t.graph.adjoint(t.param_nodes[p]);
                Tensor& theta = model.params[p].second;
                Tensor& v = velocity[p];
                for (std::size_t j = 0; j < theta.numel(); ++j) {
                    v[j] = cfg.sgd_momentum * v[j] + g[j];
                    theta[j] -= cfg.learning_rate * v[j];
                }
                if (!theta.all_finite())
                    throw std::runtime_error("training diverged (epoch " +
                                             std::to_string(epoch) + ", batch " +
                                             std::to_string(start / bs) +
                                             "): non-finite parameters after update");
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = loss_sum / static_cast<double>(n);
        try {
            const EvalResult nat = evaluate(model, eval_set, nullptr, cfg.batch_size);
            em.natural_accuracy = nat.accuracy;
            em.natural_loss = nat.mean_loss;
            if (adversarial) {
                const EvalResult adv = evaluate(model, eval_set, &*cfg.attack, cfg.batch_size);
                em.adversarial_accuracy = adv.accuracy;
                em.adversarial_loss = adv.mean_loss;
            }
        } catch (const std::runtime_error& e) {
            // Parameters can pass the finiteness check yet overflow on the
            // next forward; that is still a divergence of the fit.
            throw std::runtime_error("training diverged (epoch " + std::to_string(epoch) +
                                     ", evaluation): " + e.what());
        }
        out.epochs.push_back(em);
        if (!cfg.checkpoint_path.empty()) save_checkpoint(cfg.checkpoint_path, model);
    }

    out.model = std::move(model);
    return out;
}

}  // namespace

EvalResult evaluate(const Model& m, const Dataset& d, const AttackConfig* attack,
                    std::size_t batch_size) {
    if (d.size() == 0) throw std::invalid_argument("evaluate: dataset is empty");
    if (batch_size == 0) throw std::invalid_argument("evaluate: batch size must be positive");
    check_input_shape(m, d, "evaluate");
    if (attack) attack->validate();

    const std::size_t n = d.size();
    const std::size_t bs = std::min(batch_size, n);
    const std::size_t rem = n % bs;
    const bool spectral = attack && attack->method == AttackMethod::SPGD;

    std::optional<SpectralPlan> plan;
    if (spectral) plan.emplace(m.spec.in_h, m.spec.in_w);
    const auto make_binding = [&](std::size_t count) {
        return spectral ? bind_frequency(m, count, *plan) : bind_pixel(m, count);
    };
    BoundModel main_b = make_binding(bs);
    std::optional<BoundModel> rem_b;
    if (rem) rem_b.emplace(make_binding(rem));

    double loss_sum = 0.0;
    std::size_t hits = 0;
    std::uint64_t batch_idx = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batch_idx) {
        const std::size_t count = std::min(bs, n - start);
        BoundModel& b = count == bs ? main_b : *rem_b;
        const Tensor x = batch_images(d, start, count);
        const std::vector<int> y = batch_labels(d, start, count);
        if (!attack) {
            b.set_batch(x, y);
            loss_sum += b.forward_loss() * static_cast<double>(count);
            hits += count_hits(b, y);
        } else {
            AttackConfig a = *attack;
            a.seed = mix_seed(attack->seed, batch_idx);
            const FinalStep fin = attack_batch(b, plan ? &*plan : nullptr, x, y, a);
            loss_sum += fin.mean_loss * static_cast<double>(count);
            hits += fin.hits;
        }
    }
    return {static_cast<double>(hits) / static_cast<double>(n),
            loss_sum / static_cast<double>(n)};
}

TrainResult train_standard(Model model, const Dataset& train_set, const Dataset& eval_set,
                           const TrainConfig& cfg) {
    if (cfg.attack)
        throw std::invalid_argument("train_standard: attack config present; use "
                                    "train_adversarial");
    return train_impl(std::move(model), train_set, eval_set, cfg, false);
}

TrainResult train_adversarial(Model model, const Dataset& train_set, const Dataset& eval_set,
                              const TrainConfig& cfg) {
    if (!cfg.attack)
        throw std::invalid_argument("train_adversarial: attack config missing");
    return train_impl(std::move(model), train_set, eval_set, cfg, true);
}

}  // namespace sadv
