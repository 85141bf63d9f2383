#include "sadv/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sadv/model.hpp"
#include "sadv/rng.hpp"

namespace sadv {
namespace {

// Seed-stream tags for dataset materialization; distinct from the shuffle
// and attack tags used during training so no two streams ever coincide.
constexpr std::uint64_t kTrainDataTag = 0xDA7A12;
constexpr std::uint64_t kEvalDataTag = 0xDA7AEF;

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

[[noreturn]] void fail_file(const std::string& origin, const std::string& msg) {
    throw ConfigError(origin + ": " + msg);
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = value.find(',', start);
        out.push_back(trim(value.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

struct Parser {
    std::string origin;
    RunConfig cfg;

    bool seed_set = false;
    std::set<std::string> seen;                        // "<section scope>\n<key>"
    std::map<std::string, std::size_t> attack_lines;   // attack name -> header line
    std::set<std::string> attack_seed_explicit;
    std::set<std::string> attack_method_set;
    std::map<std::string, std::size_t> section_lines;  // plain section -> first header line

    std::string section;      // "" (top level), dataset, model, train, report, attack
    std::string attack_name;  // valid while section == "attack"

    double number(std::size_t line, const std::string& key, const std::string& value) const {
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE)
            fail(origin, line, "key '" + key + "' expects a number; got '" + value + "'");
        return v;
    }

    std::uint64_t unsigned64(std::size_t line, const std::string& key,
                             const std::string& value) const {
        errno = 0;
        char* end = nullptr;
        const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
        if (value.empty() || value[0] == '-' || end != value.c_str() + value.size() ||
            errno == ERANGE)
            fail(origin, line, "key '" + key + "' expects a non-negative integer; got '" +
                                   value + "'");
        return static_cast<std::uint64_t>(v);
    }

    std::size_t count(std::size_t line, const std::string& key, const std::string& value) const {
        return static_cast<std::size_t>(unsigned64(line, key, value));
    }

    bool boolean(std::size_t line, const std::string& key, const std::string& value) const {
        if (value == "true") return true;
        if (value == "false") return false;
        fail(origin, line, "key '" + key + "' expects true or false; got '" + value + "'");
    }

    std::vector<double> number_list(std::size_t line, const std::string& key,
                                    const std::string& value) const {
        std::vector<double> out;
        for (const std::string& item : split_list(value)) out.push_back(number(line, key, item));
        return out;
    }

    std::vector<std::string> name_list(std::size_t line, const std::string& key,
                                       const std::string& value) const {
        std::vector<std::string> out = split_list(value);
        for (const std::string& item : out)
            if (!valid_name(item))
                fail(origin, line, "key '" + key + "' expects attack names; got '" + item + "'");
        return out;
    }

    AttackConfig& current_attack() {
        for (auto& [name, a] : cfg.attacks)
            if (name == attack_name) return a;
        throw std::logic_error("parser lost its attack section");
    }

    void header(std::size_t line, const std::string& inner) {
        attack_name.clear();
        if (inner == "dataset" || inner == "model" || inner == "train" || inner == "report") {
            section = inner;
            section_lines.emplace(inner, line);
            return;
        }
        if (inner.rfind("attack", 0) == 0 &&
            (inner.size() == 6 || inner[6] == ' ' || inner[6] == '\t')) {
            const std::string name = trim(inner.substr(6));
            if (!valid_name(name))
                fail(origin, line,
                     "attack sections are written '[attack <name>]' with a name of letters, "
                     "digits, '-' or '_'");
            if (attack_lines.contains(name)) fail(origin, line, "duplicate attack '" + name + "'");
            cfg.attacks.emplace_back(name, AttackConfig{});
            attack_lines.emplace(name, line);
            section = "attack";
            attack_name = name;
            return;
        }
        fail(origin, line, "unknown section '[" + inner + "]'");
    }

    void pair(std::size_t line, const std::string& key, const std::string& value) {
        const std::string scope = section == "attack" ? "attack " + attack_name : section;
        if (!seen.insert(scope + "\n" + key).second) {
            const std::string where = scope.empty() ? "at the top level" : "in [" + scope + "]";
            fail(origin, line, "duplicate key '" + key + "' " + where);
        }
        if (section.empty()) top_level(line, key, value);
        else if (section == "dataset") dataset(line, key, value);
        else if (section == "model") model(line, key, value);
        else if (section == "train") train(line, key, value);
        else if (section == "report") report(line, key, value);
        else attack(line, key, value);
    }

    void top_level(std::size_t line, const std::string& key, const std::string& value) {
        if (key == "seed") {
            cfg.seed = unsigned64(line, key, value);
            seed_set = true;
        } else if (key == "threads") {
            cfg.threads = count(line, key, value);
            if (cfg.threads == 0) fail(origin, line, "threads must be at least 1");
        } else {
            fail(origin, line, "unknown key '" + key + "' outside any section");
        }
    }

    void dataset(std::size_t line, const std::string& key, const std::string& value) {
        DatasetSpec& d = cfg.dataset;
        if (key == "source") {
            if (value != "digits" && value != "blobs" && value != "idx")
                fail(origin, line, "dataset source must be digits, blobs or idx; got '" + value +
                                       "'");
            d.source = value;
        } else if (key == "count") d.count = count(line, key, value);
        else if (key == "eval_count") d.eval_count = count(line, key, value);
        else if (key == "images") d.images = value;
        else if (key == "labels") d.labels = value;
        else if (key == "eval_images") d.eval_images = value;
        else if (key == "eval_labels") d.eval_labels = value;
        else if (key == "classes") d.classes = count(line, key, value);
        else if (key == "dims") d.dims = count(line, key, value);
        else if (key == "separation") d.separation = number(line, key, value);
        else fail(origin, line, "unknown key '" + key + "' in [dataset]");
    }

    void model(std::size_t line, const std::string& key, const std::string& value) {
        if (key != "arch") fail(origin, line, "unknown key '" + key + "' in [model]");
        try {
            ModelSpec::parse(value);
        } catch (const std::invalid_argument& e) {
            fail(origin, line, std::string("bad architecture: ") + e.what());
        }
        cfg.model_arch = value;
    }

    void train(std::size_t line, const std::string& key, const std::string& value) {
        TrainSpec& t = cfg.train;
        if (key == "epochs") t.config.epochs = count(line, key, value);
        else if (key == "batch_size") t.config.batch_size = count(line, key, value);
        else if (key == "learning_rate") t.config.learning_rate = number(line, key, value);
        else if (key == "momentum") t.config.sgd_momentum = number(line, key, value);
        else if (key == "attack") {
            if (!valid_name(value))
                fail(origin, line, "key 'attack' expects an attack name; got '" + value + "'");
            t.attack = value;
        } else if (key == "checkpoint") {
            if (value.empty()) fail(origin, line, "key 'checkpoint' expects a file name");
            t.checkpoint = value;
        } else if (key == "init") {
            if (value.empty()) fail(origin, line, "key 'init' expects a checkpoint path");
            t.init_checkpoint = value;
        } else fail(origin, line, "unknown key '" + key + "' in [train]");
    }

    void report(std::size_t line, const std::string& key, const std::string& value) {
        ReportSpec& r = cfg.report;
        if (key == "out") {
            if (value.empty()) fail(origin, line, "key 'out' expects a directory name");
            r.out_dir = value;
        } else if (key == "step_table") r.step_table = name_list(line, key, value);
        else if (key == "histogram") {
            if (!valid_name(value))
                fail(origin, line, "key 'histogram' expects an attack name; got '" + value + "'");
            r.histogram = value;
        } else if (key == "histogram_bins") {
            r.histogram_bins = count(line, key, value);
            if (r.histogram_bins < 2) fail(origin, line, "histogram_bins must be at least 2");
        } else if (key == "curve") {
            if (!valid_name(value))
                fail(origin, line, "key 'curve' expects an attack name; got '" + value + "'");
            r.curve = value;
        } else if (key == "curve_epsilons") {
            r.curve_epsilons = number_list(line, key, value);
            if (r.curve_epsilons.empty() || r.curve_epsilons.front() != 0.0)
                fail(origin, line, "curve_epsilons must start at 0");
            for (std::size_t i = 1; i < r.curve_epsilons.size(); ++i)
                if (r.curve_epsilons[i] <= r.curve_epsilons[i - 1])
                    fail(origin, line, "curve_epsilons must be strictly ascending");
        } else if (key == "heatmaps") r.heatmaps = boolean(line, key, value);
        else if (key == "heatmap_index") r.heatmap_index = count(line, key, value);
        else fail(origin, line, "unknown key '" + key + "' in [report]");
    }

    void attack(std::size_t line, const std::string& key, const std::string& value) {
        AttackConfig& a = current_attack();
        if (key == "method") {
            try {
                a.method = parse_attack_method(value);
            } catch (const std::invalid_argument& e) {
                fail(origin, line, e.what());
            }
            attack_method_set.insert(attack_name);
        } else if (key == "epsilon") a.epsilon = number(line, key, value);
        else if (key == "step_size") a.step_size = number(line, key, value);
        else if (key == "steps") a.steps = count(line, key, value);
        else if (key == "momentum") a.momentum = number(line, key, value);
        else if (key == "random_init") a.random_init = boolean(line, key, value);
        else if (key == "seed") {
            a.seed = unsigned64(line, key, value);
            attack_seed_explicit.insert(attack_name);
        } else if (key == "prime_momentum") a.blend_from_step0 = boolean(line, key, value);
        else fail(origin, line, "unknown key '" + key + "' in [attack " + attack_name + "]");
    }

    void line_in(std::size_t line_no, const std::string& raw) {
        std::string text = raw;
        const std::size_t hash = text.find('#');
        if (hash != std::string::npos) text.erase(hash);
        text = trim(text);
        if (text.empty()) return;

        if (text.front() == '[') {
            if (text.back() != ']') fail(origin, line_no, "unterminated section header");
            header(line_no, trim(text.substr(1, text.size() - 2)));
            return;
        }
        const std::size_t eq = text.find('=');
        if (eq == std::string::npos) fail(origin, line_no, "expected 'key = value'");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty()) fail(origin, line_no, "expected 'key = value'");
        pair(line_no, key, value);
    }

    std::size_t section_line(const std::string& name) const {
        const auto it = section_lines.find(name);
        return it == section_lines.end() ? 0 : it->second;
    }

    void check_reference(const std::string& name, const std::string& referrer) const {
        if (name.empty() || attack_lines.contains(name)) return;
        fail_file(origin, "unknown attack '" + name + "' referenced by " + referrer);
    }

    void finish(const std::optional<std::uint64_t>& seed_override) {
        if (seed_override) {
            cfg.seed = *seed_override;
        } else if (!seed_set) {
            fail_file(origin, "missing required key 'seed'");
        }
        cfg.train.config.seed = cfg.seed;

        for (auto& [name, a] : cfg.attacks) {
            if (!attack_method_set.contains(name))
                fail(origin, attack_lines.at(name), "[attack " + name + "] does not set 'method'");
            if (!attack_seed_explicit.contains(name)) a.seed = cfg.seed;
            try {
                a.validate();
            } catch (const std::invalid_argument& e) {
                fail(origin, attack_lines.at(name),
                     "[attack " + name + "] " + std::string(e.what()));
            }
        }

        try {
            cfg.train.config.validate();
        } catch (const std::invalid_argument& e) {
            const std::size_t line = section_line("train");
            if (line) fail(origin, line, "[train] " + std::string(e.what()));
            fail_file(origin, "[train] " + std::string(e.what()));
        }

        check_reference(cfg.train.attack, "train.attack");
        check_reference(cfg.report.histogram, "report.histogram");
        check_reference(cfg.report.curve, "report.curve");
        for (const std::string& name : cfg.report.step_table)
            check_reference(name, "report.step_table");

        const DatasetSpec& d = cfg.dataset;
        const std::size_t dline = section_line("dataset");
        const auto fail_dataset = [&](const std::string& msg) {
            if (dline) fail(origin, dline, "[dataset] " + msg);
            fail_file(origin, "[dataset] " + msg);
        };
        if (d.source == "idx") {
            if (d.images.empty() || d.labels.empty() || d.eval_images.empty() ||
                d.eval_labels.empty())
                fail_dataset(
                    "idx source needs 'images', 'labels', 'eval_images' and 'eval_labels'");
        } else {
            if (d.count == 0 || d.eval_count == 0)
                fail_dataset("synthetic sources need count and eval_count of at least 1");
        }
        if (d.source == "blobs") {
            if (d.classes < 2) fail_dataset("blobs need at least 2 classes");
            if (d.dims == 0) fail_dataset("blobs need at least 1 dimension");
            if (!(d.separation > 0.0)) fail_dataset("blob separation must be positive");
        }
    }
};

}  // namespace

const AttackConfig* RunConfig::find_attack(const std::string& name) const {
    for (const auto& [n, a] : attacks)
        if (n == name) return &a;
    return nullptr;
}

RunConfig parse_run_config_text(const std::string& text, const std::string& origin,
                                const std::optional<std::uint64_t>& seed_override) {
    Parser p;
    p.origin = origin;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) p.line_in(++line_no, line);
    p.finish(seed_override);
    return p.cfg;
}

RunConfig parse_run_config(const std::string& path,
                           const std::optional<std::uint64_t>& seed_override) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw ConfigError("cannot read config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config_text(buf.str(), path, seed_override);
}

Dataset make_train_set(const RunConfig& cfg) {
    const DatasetSpec& d = cfg.dataset;
    if (d.source == "digits") return synth_digits(d.count, mix_seed(cfg.seed, kTrainDataTag));
    if (d.source == "blobs")
        return synth_blobs(d.classes, d.count, d.dims, d.separation,
                           mix_seed(cfg.seed, kTrainDataTag));
    return load_idx(d.images, d.labels);
}

Dataset make_eval_set(const RunConfig& cfg) {
    const DatasetSpec& d = cfg.dataset;
    if (d.source == "digits") return synth_digits(d.eval_count, mix_seed(cfg.seed, kEvalDataTag));
    if (d.source == "blobs")
        return synth_blobs(d.classes, d.eval_count, d.dims, d.separation,
                           mix_seed(cfg.seed, kEvalDataTag));
    return load_idx(d.eval_images, d.eval_labels);
}

}  // namespace sadv
