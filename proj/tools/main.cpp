#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "sadv/analysis.hpp"
#include "sadv/checkpoint.hpp"
#include "sadv/config.hpp"
#include "sadv/training.hpp"
#include "sadv/verify.hpp"

namespace fs = std::filesystem;
using namespace sadv;

namespace {

struct CloseFile {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, CloseFile>;

FilePtr open_write(const fs::path& path) {
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    return f;
}

fs::path pick_out_dir(const RunConfig& cfg, const std::string& flag) {
    const fs::path dir = flag.empty() ? fs::path(cfg.report.out_dir) : fs::path(flag);
    fs::create_directories(dir);
    return dir;
}

Model model_from(const RunConfig& cfg, const std::string& checkpoint, bool checkpoint_required) {
    if (!checkpoint.empty()) {
        Model m = load_checkpoint(checkpoint);
        if (!cfg.model_arch.empty() && cfg.model_arch != m.spec.descriptor)
            throw std::runtime_error("checkpoint architecture '" + m.spec.descriptor +
                                     "' does not match the configured arch");
        return m;
    }
    if (checkpoint_required) throw ConfigError("this command needs --checkpoint");
    if (cfg.model_arch.empty())
        throw ConfigError("config sets no [model] arch and no --checkpoint was given");
    return Model::init(cfg.model_arch, cfg.seed);
}

AttackConfig resolve_attack(const RunConfig& cfg, const std::string& name, const Dataset& d) {
    const AttackConfig* a = cfg.find_attack(name);
    if (!a) throw ConfigError("unknown attack '" + name + "'");  // parse already guards this
    AttackConfig out = *a;
    out.lo = d.lo;
    out.hi = d.hi;
    return out;
}

/// Runs any configured attack on one batch and returns its recorded trace;
/// the single-step method is wrapped into a one-step trace for uniformity.
PerturbationTrace trace_batch(const Model& m, const Dataset& d, const AttackConfig& cfg,
                              std::size_t batch) {
    const std::size_t n = std::min(batch, d.size());
    const Tensor x = batch_images(d, 0, n);
    const std::vector<int> y = batch_labels(d, 0, n);
    if (cfg.method == AttackMethod::SPGD) {
        const SpectralPlan plan(x.dim(2), x.dim(3));
        BoundModel b = bind_frequency(m, n, plan);
        return spgd(b, x, y, cfg, plan);
    }
    BoundModel b = bind_pixel(m, n);
    switch (cfg.method) {
        case AttackMethod::PGD:
            return pgd(b, x, y, cfg);
        case AttackMethod::MomentumPGD:
            return momentum_pgd(b, x, y, cfg);
        case AttackMethod::NoSignPGD:
            return nosign_pgd(b, x, y, cfg);
        default: {
            PerturbationTrace t;
            t.x_nat = x;
            AttackStep step;
            step.x_adv = fgsm(b, x, y, cfg);
            b.set_batch(step.x_adv, y);
            step.mean_loss = b.forward_loss();
            const std::vector<int> pred = b.predictions();
            step.correct.resize(n);
            for (std::size_t i = 0; i < n; ++i) step.correct[i] = pred[i] == y[i];
            t.steps.push_back(std::move(step));
            return t;
        }
    }
}

void write_train_metrics_csv(const TrainResult& r, const fs::path& path) {
    FilePtr f = open_write(path);
    const bool adversarial = !r.epochs.empty() && r.epochs.front().adversarial_accuracy;
    std::fprintf(f.get(), "epoch,train_loss,natural_accuracy,natural_loss%s\n",
                 adversarial ? ",adversarial_accuracy,adversarial_loss" : "");
    for (const EpochMetrics& e : r.epochs) {
        std::fprintf(f.get(), "%zu,%.17g,%.17g,%.17g", e.epoch, e.train_loss,
                     e.natural_accuracy, e.natural_loss);
        if (adversarial)
            std::fprintf(f.get(), ",%.17g,%.17g", *e.adversarial_accuracy,
                         *e.adversarial_loss);
        std::fprintf(f.get(), "\n");
    }
}

int cmd_train(const RunConfig& cfg, const std::string& checkpoint, const fs::path& out) {
    const Dataset train_set = make_train_set(cfg);
    const Dataset eval_set = make_eval_set(cfg);
    Model m = [&] {
        if (!cfg.train.init_checkpoint.empty()) {
            Model loaded = load_checkpoint(cfg.train.init_checkpoint);
            if (!cfg.model_arch.empty() && cfg.model_arch != loaded.spec.descriptor)
                throw std::runtime_error("init checkpoint architecture '" +
                                         loaded.spec.descriptor +
                                         "' does not match the configured arch");
            return loaded;
        }
        if (cfg.model_arch.empty()) throw ConfigError("[model] arch is required to train");
        return Model::init(cfg.model_arch, cfg.seed);
    }();

    TrainConfig tc = cfg.train.config;
    const fs::path ckpt =
        checkpoint.empty() ? out / cfg.train.checkpoint : fs::path(checkpoint);
    tc.checkpoint_path = ckpt.string();

    TrainResult r;
    if (!cfg.train.attack.empty()) {
        tc.attack = resolve_attack(cfg, cfg.train.attack, train_set);
        r = train_adversarial(std::move(m), train_set, eval_set, tc);
    } else {
        r = train_standard(std::move(m), train_set, eval_set, tc);
    }

    for (const EpochMetrics& e : r.epochs) {
        std::printf("epoch %zu/%zu  train_loss %.6f  natural_acc %.4f", e.epoch, tc.epochs,
                    e.train_loss, e.natural_accuracy);
        if (e.adversarial_accuracy) std::printf("  adv_acc %.4f", *e.adversarial_accuracy);
        std::printf("\n");
    }
    write_train_metrics_csv(r, out / "train_metrics.csv");
    std::printf("checkpoint written to %s\n", ckpt.string().c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const fs::path& out) {
    const Model m = model_from(cfg, checkpoint, true);
    const Dataset eval_set = make_eval_set(cfg);
    const std::size_t batch = cfg.train.config.batch_size;

    std::vector<std::pair<std::string, EvalResult>> rows;
    rows.emplace_back("natural", evaluate(m, eval_set, nullptr, batch));
    for (const auto& [name, _] : cfg.attacks) {
        const AttackConfig a = resolve_attack(cfg, name, eval_set);
        rows.emplace_back(name, evaluate(m, eval_set, &a, batch));
    }

    FilePtr f = open_write(out / "eval.csv");
    std::fprintf(f.get(), "setting,accuracy,mean_loss\n");
    for (const auto& [name, r] : rows) {
        std::printf("%-16s accuracy %.4f  mean_loss %.6f\n", name.c_str(), r.accuracy,
                    r.mean_loss);
        std::fprintf(f.get(), "%s,%.17g,%.17g\n", name.c_str(), r.accuracy, r.mean_loss);
    }
    return 0;
}

int cmd_attack(const RunConfig& cfg, const std::string& checkpoint, const fs::path& out) {
    if (cfg.attacks.empty()) throw ConfigError("no [attack <name>] sections configured");
    const Model m = model_from(cfg, checkpoint, true);
    const Dataset eval_set = make_eval_set(cfg);
    const std::size_t batch = cfg.train.config.batch_size;

    for (const auto& [name, _] : cfg.attacks) {
        const AttackConfig a = resolve_attack(cfg, name, eval_set);
        const std::vector<StepTableRow> rows = attack_step_table(m, eval_set, {{name, a}}, batch);
        write_step_table_csv(rows, (out / ("steps_" + name + ".csv")).string());
        const StepTableRow& last = rows.back();
        std::printf("%-16s steps %zu  adversarial_accuracy %.4f  mean_loss %.6f\n", name.c_str(),
                    last.step, last.adversarial_accuracy, last.adversarial_loss);

        if (a.epsilon > 0.0) {
            const PerturbationTrace t = trace_batch(m, eval_set, a, batch);
            write_histogram_csv(component_histograms(t, cfg.report.histogram_bins, a.epsilon, name),
                                (out / ("hist_" + name + ".csv")).string());
        } else {
            std::printf("%-16s zero budget; skipping the perturbation histogram\n", name.c_str());
        }
    }
    return 0;
}

int cmd_report(const RunConfig& cfg, const std::string& checkpoint, const fs::path& out) {
    const Model m = model_from(cfg, checkpoint, true);
    const Dataset eval_set = make_eval_set(cfg);
    const std::size_t batch = cfg.train.config.batch_size;
    const ReportSpec& rep = cfg.report;

    if (!rep.step_table.empty()) {
        std::vector<std::pair<std::string, AttackConfig>> specs;
        for (const std::string& name : rep.step_table)
            specs.emplace_back(name, resolve_attack(cfg, name, eval_set));
        const std::vector<StepTableRow> rows = attack_step_table(m, eval_set, specs, batch);
        write_step_table_csv(rows, (out / "step_table.csv").string());
        for (const StepTableRow& r : rows)
            if (r.step == specs.front().second.steps || r.step == rows.back().step)
                std::printf("step_table %-12s step %-3zu accuracy %.4f\n", r.method.c_str(),
                            r.step, r.adversarial_accuracy);
    }

    if (!rep.histogram.empty()) {
        const AttackConfig a = resolve_attack(cfg, rep.histogram, eval_set);
        if (a.epsilon <= 0.0) throw ConfigError("report.histogram needs a positive budget");
        const PerturbationTrace t = trace_batch(m, eval_set, a, batch);
        const std::vector<Histogram> hs =
            component_histograms(t, rep.histogram_bins, a.epsilon, rep.histogram);
        write_histogram_csv(hs, (out / ("histogram_" + rep.histogram + ".csv")).string());
        write_histogram_svg(hs.back(), (out / ("histogram_" + rep.histogram + ".svg")).string());
        std::printf("histogram %s: %.4f of final-step components below half budget\n",
                    rep.histogram.c_str(),
                    fraction_below(t, t.steps.size() - 1, 0.5 * a.epsilon));
    }

    if (!rep.curve.empty()) {
        const AttackConfig tmpl = resolve_attack(cfg, rep.curve, eval_set);
        const std::string label =
            checkpoint.empty() ? "model" : fs::path(checkpoint).stem().string();
        const SecurityCurve curve =
            security_curve(m, eval_set, tmpl, rep.curve_epsilons, batch, rep.curve, label);
        write_security_curve_csv(curve, (out / "security_curve.csv").string());
        for (std::size_t i = 0; i < curve.epsilons.size(); ++i)
            std::printf("curve %-12s budget %-6g accuracy %.4f\n", rep.curve.c_str(),
                        curve.epsilons[i], curve.accuracies[i]);
    }

    if (rep.heatmaps) {
        if (rep.heatmap_index >= eval_set.size())
            throw std::runtime_error("heatmap_index is past the end of the evaluation set");
        const Tensor img = batch_images(eval_set, rep.heatmap_index, 1);
        const Tensor x = img.reshaped({img.dim(1), img.dim(2), img.dim(3)});
        const SpectralPlan plan(x.dim(1), x.dim(2));
        const GradientMaps maps =
            gradient_heatmaps(m, x, eval_set.labels[rep.heatmap_index], plan);
        write_heatmap_svg(maps.pixel_grad, (out / "heatmap_pixel.svg").string());
        write_heatmap_svg(maps.freq_grad, (out / "heatmap_frequency.svg").string());

        const auto bands = band_energies(maps.freq_grad);
        static const char* kBandNames[] = {"low", "mid-low", "mid-high", "high"};
        FilePtr f = open_write(out / "band_energy.csv");
        std::fprintf(f.get(), "band,share\n");
        for (std::size_t i = 0; i < 4; ++i) {
            std::fprintf(f.get(), "%s,%.17g\n", kBandNames[i], bands[i]);
            std::printf("band %-8s share %.4f\n", kBandNames[i], bands[i]);
        }
    }
    return 0;
}

int cmd_verify(const RunConfig& cfg, const std::string& checkpoint, const fs::path& out,
               bool corrupt) {
    const Model m = model_from(cfg, checkpoint, false);
    const Dataset eval_set = make_eval_set(cfg);
    VerifyOptions opt;
    opt.corrupt_dct_basis = corrupt;
    const std::vector<CheckResult> results = run_verification(m, eval_set, opt);
    const std::string text = format_verification(results);
    std::fputs(text.c_str(), stdout);
    FilePtr f = open_write(out / "verify_report.txt");
    std::fputs(text.c_str(), f.get());
    return all_passed(results) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frequency-domain adversarial example toolkit"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_flag;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    bool corrupt = false;

    CLI::App* train = app.add_subcommand("train", "fit a model and write a checkpoint");
    CLI::App* attack = app.add_subcommand("attack", "run the configured attacks and record CSVs");
    CLI::App* eval = app.add_subcommand("eval", "natural and adversarial accuracy of a checkpoint");
    CLI::App* verify =
        app.add_subcommand("verify", "numerical checks behind the frequency-domain attack");
    CLI::App* report = app.add_subcommand("report", "tables and figures for a checkpoint");

    for (CLI::App* sc : {train, attack, eval, verify, report}) {
        sc->add_option("--config", config_path, "run configuration file")->required();
        sc->add_option("--checkpoint", checkpoint_path,
                       "model checkpoint (output of train, input elsewhere)");
        sc->add_option("--out", out_flag, "output directory (default: the config's report.out)");
        sc->add_option("--seed", seed, "override the config seed");
        sc->add_option("--threads", threads, "upper bound on internal parallelism");
    }
    verify->add_flag("--corrupt-dct-basis", corrupt,
                     "testing aid: damage the cosine basis so the transform checks must fail");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = parse_run_config(config_path, seed);
        if (threads) {
            if (*threads == 0) throw ConfigError("threads must be at least 1");
            cfg.threads = *threads;
        }
        const fs::path out = pick_out_dir(cfg, out_flag);
        if (train->parsed()) return cmd_train(cfg, checkpoint_path, out);
        if (attack->parsed()) return cmd_attack(cfg, checkpoint_path, out);
        if (eval->parsed()) return cmd_eval(cfg, checkpoint_path, out);
        if (verify->parsed()) return cmd_verify(cfg, checkpoint_path, out, corrupt);
        return cmd_report(cfg, checkpoint_path, out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
