#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sadv/attacks.hpp"
#include "sadv/data_io.hpp"
#include "sadv/training.hpp"

namespace sadv {

/// Malformed or inconsistent run configuration. Raised with a
/// `<origin>:<line>:` prefix wherever a concrete line is to blame, so the
/// CLI can map bad input to its own exit code and the user can jump to the
/// offending key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetSpec {
    std::string source = "digits";  // digits | blobs | idx
    /// Synthetic sizes: total images for digits, images per class for blobs.
    std::size_t count = 1000;
    std::size_t eval_count = 200;
    /// IDX file pairs (source = idx).
    std::string images, labels;
    std::string eval_images, eval_labels;
    /// Blob geometry (source = blobs).
    std::size_t classes = 10;
    std::size_t dims = 64;
    double separation = 6.0;
};

struct TrainSpec {
    TrainConfig config;
    std::string attack;                     // named attack; empty = standard training
    std::string checkpoint = "model.ckpt";  // written under the output directory
    /// Checkpoint to start from instead of a fresh initialization. A short
    /// standard warm-up is the reliable way into adversarial training, which
    /// tends to collapse to the uniform predictor from random weights.
    std::string init_checkpoint;
};

struct ReportSpec {
    std::string out_dir = "reports";      // artifact directory (CLI --out overrides)
    std::vector<std::string> step_table;  // named attacks sharing one budget
    std::string histogram;                // attack traced into component histograms
    std::size_t histogram_bins = 101;
    std::string curve;                    // attack swept across budgets
    std::vector<double> curve_epsilons = {0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    bool heatmaps = false;
    std::size_t heatmap_index = 0;        // evaluation-set sample to map
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t threads = 1;  // upper bound on internal parallelism
    DatasetSpec dataset;
    std::string model_arch;   // architecture descriptor; empty defers to a checkpoint
    TrainSpec train;
    std::vector<std::pair<std::string, AttackConfig>> attacks;  // declaration order
    ReportSpec report;

    const AttackConfig* find_attack(const std::string& name) const;
};

/// Parses the key-value run configuration (see the bundled example for the
/// grammar: `[section]` headers, `key = value` lines, `#` comments). Every
/// diagnostic carries the file name and line. `seed_override` replaces the
/// file's global seed before derived defaults (per-attack seeds) are filled
/// in. The file must set `seed`; attacks are validated here so bad settings
/// never reach computation.
RunConfig parse_run_config(const std::string& path,
                           const std::optional<std::uint64_t>& seed_override = {});

/// Same parser over an in-memory string; `origin` names the source in
/// diagnostics.
RunConfig parse_run_config_text(const std::string& text, const std::string& origin,
                                const std::optional<std::uint64_t>& seed_override = {});

/// Materializes the configured datasets. Synthetic sources derive distinct
/// training and evaluation streams from the global seed; idx sources load
/// the configured file pairs.
Dataset make_train_set(const RunConfig& cfg);
Dataset make_eval_set(const RunConfig& cfg);

}  // namespace sadv
