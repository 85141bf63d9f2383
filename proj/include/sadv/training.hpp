#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sadv/attacks.hpp"
#include "sadv/data_io.hpp"
#include "sadv/model.hpp"

namespace sadv {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 50;
    double learning_rate = 0.01;  // 0 freezes the parameters (useful as a control)
    double sgd_momentum = 0.9;
    /// When present, every batch is replaced by its adversarial counterpart
    /// before the descent step (the attack sees the current parameters).
    std::optional<AttackConfig> attack;
    std::uint64_t seed = 0;
    std::string checkpoint_path;  // written after every epoch when non-empty

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;   // 1-based
    double train_loss = 0.0; // mean pre-update batch loss (adversarial when attacking)
    double natural_accuracy = 0.0;
    double natural_loss = 0.0;
    /// Present only when training with an attack; measured with the training
    /// attack on the evaluation set.
    std::optional<double> adversarial_accuracy;
    std::optional<double> adversarial_loss;
};

struct TrainResult {
    Model model;
    std::vector<EpochMetrics> epochs;
};

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

/// Natural (attack == nullptr) or adversarial accuracy and mean loss over
/// the dataset, processed in mini-batches. Adversarial numbers come from the
/// final attack step; per-batch attack seeds derive from attack->seed and
/// the batch index, so repeated calls are deterministic.
EvalResult evaluate(const Model& m, const Dataset& d, const AttackConfig* attack,
                    std::size_t batch_size);

/// Mini-batch SGD with momentum on the mean cross-entropy. Metrics are
/// computed on `eval_set` after every epoch. Fixed seeds give bit-identical
/// parameter trajectories.
TrainResult train_standard(Model model, const Dataset& train_set, const Dataset& eval_set,
                           const TrainConfig& cfg);

/// Same descent loop, but each batch is first replaced by adversarial
/// examples generated against the current parameters; the loss is computed
/// only on the adversarial batch. With epsilon = 0 this reduces exactly to
/// train_standard.
TrainResult train_adversarial(Model model, const Dataset& train_set, const Dataset& eval_set,
                              const TrainConfig& cfg);

}  // namespace sadv
