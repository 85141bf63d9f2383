#include "sadv/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "sadv/rng.hpp"
#include "sadv/training.hpp"

namespace sadv {

namespace {

void check_label(const std::string& label, const char* what) {
    if (label.empty() || label.find(',') != std::string::npos ||
        label.find('\n') != std::string::npos)
        throw std::invalid_argument(std::string(what) + " label '" + label +
                                    "' must be non-empty and free of commas and newlines");
}

std::FILE* open_write(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    return f;
}

}  // namespace

std::vector<Histogram> component_histograms(const PerturbationTrace& trace, std::size_t bins,
                                            double epsilon, const std::string& method) {
    if (trace.steps.empty()) throw std::invalid_argument("histogram: empty trace");
    if (bins < 2) throw std::invalid_argument("histogram: need at least two bins");
    if (epsilon <= 0.0) throw std::invalid_argument("histogram: budget must be positive");
    check_label(method, "histogram method");

    const double left = -1.25 * epsilon;
    const double right = 1.25 * epsilon;
    const double width = (right - left) / static_cast<double>(bins);

    std::vector<Histogram> out;
    out.reserve(trace.steps.size());
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
        Histogram h;
        h.method = method;
        h.step = k + 1;
        h.epsilon = epsilon;
        h.edges.resize(bins + 1);
        for (std::size_t i = 0; i <= bins; ++i)
            h.edges[i] = left + width * static_cast<double>(i);
        h.edges[bins] = right;  // exact symmetric endpoint
        h.counts.assign(bins, 0);
        for (double v : trace.components(k)) {
            const double t = (v - left) / width;
            std::size_t idx = t <= 0.0 ? 0 : static_cast<std::size_t>(t);
            if (idx >= bins) idx = bins - 1;  // right edge and stray mass stay counted
            ++h.counts[idx];
        }
        out.push_back(std::move(h));
    }
    return out;
}

double fraction_below(const PerturbationTrace& trace, std::size_t step_index,
                      double threshold) {
    const std::vector<double> delta = trace.components(step_index);
    std::size_t below = 0;
    for (double v : delta) below += std::abs(v) < threshold ? 1 : 0;
    return static_cast<double>(below) / static_cast<double>(delta.size());
}

GradientMaps gradient_heatmaps(const Model& m, const Tensor& x, int y,
                               const SpectralPlan& plan) {
    Tensor xb = x;
    if (xb.rank() == 3) xb = xb.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
    if (xb.rank() != 4 || xb.dim(0) != 1)
        throw std::invalid_argument("gradient_heatmaps: expected a single image, got " +
                                    shape_str(x.shape()));
    if (xb.dim(1) != m.spec.in_c || xb.dim(2) != m.spec.in_h || xb.dim(3) != m.spec.in_w)
        throw std::invalid_argument("gradient_heatmaps: image " + shape_str(x.shape()) +
                                    " does not fit the model input");
    const std::vector<int> label{y};
    const std::size_t c = xb.dim(1), h = xb.dim(2), w = xb.dim(3);

    const auto channel_sum = [&](const Tensor& g) {
        Tensor out(Shape{h, w});
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < h * w; ++i) out[i] += g[ch * h * w + i];
        return out;
    };

    BoundModel pix = bind_pixel(m, 1);
    pix.set_batch(xb, label);
    pix.forward_loss();
    pix.graph.backward(pix.loss, {pix.input});
    GradientMaps maps;
    maps.pixel_grad = channel_sum(pix.graph.adjoint(pix.input));

    BoundModel frq = bind_frequency(m, 1, plan);
    frq.set_batch(plan.dct2(xb), label);
    frq.forward_loss();
    frq.graph.backward(frq.loss, {frq.input});
    maps.freq_grad = channel_sum(frq.graph.adjoint(frq.input));
    return maps;
}

std::array<double, 4> band_energies(const Tensor& freq_grad) {
    if (freq_grad.rank() != 2)
        throw std::invalid_argument("band_energies: expected a [H,W] field, got " +
                                    shape_str(freq_grad.shape()));
    const std::size_t h = freq_grad.dim(0), w = freq_grad.dim(1);

    std::vector<std::size_t> manhattan(h * w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t cc = 0; cc < w; ++cc) manhattan[r * w + cc] = r + cc;
    std::vector<std::size_t> sorted = manhattan;
    std::sort(sorted.begin(), sorted.end());
    const auto rank_value = [&](std::size_t quarter) {
        const std::size_t n = sorted.size();
        const std::size_t rank = (n * quarter + 3) / 4;  // ceil(n*q/4), nearest-rank
        return sorted[rank - 1];
    };
    const std::size_t q1 = rank_value(1), q2 = rank_value(2), q3 = rank_value(3);

    std::array<double, 4> energy{0.0, 0.0, 0.0, 0.0};
    double total = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) {
        const double e = freq_grad[i] * freq_grad[i];
        const std::size_t k = manhattan[i];
        const std::size_t band = k <= q1 ? 0 : k <= q2 ? 1 : k <= q3 ? 2 : 3;
        energy[band] += e;
        total += e;
    }
    if (total > 0.0)
        for (double& e : energy) e /= total;
    return energy;
}

namespace {

/// Pixel- or frequency-domain bindings for a dataset-sized batched run.
struct AttackBindings {
    std::optional<SpectralPlan> plan;
    BoundModel main;
    std::optional<BoundModel> rem;

    AttackBindings(const Model& m, const AttackConfig& cfg, std::size_t bs, std::size_t rem_n) {
        if (cfg.method == AttackMethod::SPGD) {
            plan.emplace(m.spec.in_h, m.spec.in_w);
            main = bind_frequency(m, bs, *plan);
            if (rem_n) rem.emplace(bind_frequency(m, rem_n, *plan));
        } else {
            main = bind_pixel(m, bs);
            if (rem_n) rem.emplace(bind_pixel(m, rem_n));
        }
    }

    void run(const Tensor& x, const std::vector<int>& y, const AttackConfig& a,
             const StepSink& sink) {
        BoundModel& b = x.dim(0) == main.batch ? main : *rem;
        if (a.method == AttackMethod::SPGD)
            run_spectral_attack(b, x, y, a, *plan, sink);
        else
            run_pixel_attack(b, x, y, a, sink);
    }
};

}  // namespace

std::vector<StepTableRow> attack_step_table(
    const Model& m, const Dataset& d,
    const std::vector<std::pair<std::string, AttackConfig>>& attacks,
    std::size_t batch_size) {
    if (attacks.empty()) throw std::invalid_argument("step table: no attacks given");
    if (d.size() == 0) throw std::invalid_argument("step table: dataset is empty");
    if (batch_size == 0) throw std::invalid_argument("step table: batch size must be positive");
    const AttackConfig& first = attacks.front().second;
    for (const auto& [label, cfg] : attacks) {
        check_label(label, "step table attack");
        cfg.validate();
        if (cfg.epsilon != first.epsilon || cfg.lo != first.lo || cfg.hi != first.hi)
            throw std::invalid_argument(
                "step table: all attacks must share epsilon and value range");
    }

    const std::size_t n = d.size();
    const std::size_t bs = std::min(batch_size, n);
    const std::size_t rem = n % bs;

    std::vector<StepTableRow> rows;
    for (const auto& [label, cfg] : attacks) {
        AttackBindings bindings(m, cfg, bs, rem);
        std::vector<std::size_t> hits(cfg.steps, 0);
        std::vector<double> loss_sum(cfg.steps, 0.0);
        std::uint64_t batch_idx = 0;
        for (std::size_t start = 0; start < n; start += bs, ++batch_idx) {
            const std::size_t count = std::min(bs, n - start);
            const Tensor x = batch_images(d, start, count);
            const std::vector<int> y = batch_labels(d, start, count);
            AttackConfig a = cfg;
            a.seed = mix_seed(cfg.seed, batch_idx);
            bindings.run(x, y, a,
                         [&](std::size_t step, const Tensor&, double loss,
                             const std::vector<std::uint8_t>& correct) {
                             std::size_t ok = 0;
                             for (std::uint8_t v : correct) ok += v;
                             hits[step - 1] += ok;
                             loss_sum[step - 1] += loss * static_cast<double>(count);
                         });
        }
        for (std::size_t k = 0; k < cfg.steps; ++k)
            rows.push_back({label, k + 1,
                            static_cast<double>(hits[k]) / static_cast<double>(n),
                            loss_sum[k] / static_cast<double>(n)});
    }
    return rows;
}

SecurityCurve security_curve(const Model& m, const Dataset& d, const AttackConfig& tmpl,
                             const std::vector<double>& epsilons, std::size_t batch_size,
                             const std::string& attack_label,
                             const std::string& model_label) {
    if (epsilons.empty() || epsilons.front() != 0.0)
        throw std::invalid_argument("security curve: budgets must start at 0");
    for (std::size_t i = 1; i < epsilons.size(); ++i)
        if (!(epsilons[i] > epsilons[i - 1]))
            throw std::invalid_argument("security curve: budgets must be strictly ascending");
    check_label(attack_label, "security curve attack");
    check_label(model_label, "security curve model");

    SecurityCurve curve;
    curve.attack = attack_label;
    curve.defense_model = model_label;
    curve.epsilons = epsilons;
    curve.accuracies.reserve(epsilons.size());
    for (double eps : epsilons) {
        if (eps == 0.0) {
            curve.accuracies.push_back(evaluate(m, d, nullptr, batch_size).accuracy);
        } else {
            AttackConfig a = tmpl;
            a.epsilon = eps;
            curve.accuracies.push_back(evaluate(m, d, &a, batch_size).accuracy);
        }
    }
    return curve;
}

void write_step_table_csv(const std::vector<StepTableRow>& rows, const std::string& path) {
    std::FILE* f = open_write(path);
    std::fputs("method,step,adversarial_accuracy,adversarial_loss\n", f);
    for (const StepTableRow& r : rows)
        std::fprintf(f, "%s,%zu,%.17g,%.17g\n", r.method.c_str(), r.step,
                     r.adversarial_accuracy, r.adversarial_loss);
    std::fclose(f);
}

void write_security_curve_csv(const SecurityCurve& curve, const std::string& path) {
    if (curve.epsilons.size() != curve.accuracies.size())
        throw std::invalid_argument("security curve: ragged columns");
    std::FILE* f = open_write(path);
    std::fputs("attack,defense_model,epsilon,adversarial_accuracy\n", f);
    for (std::size_t i = 0; i < curve.epsilons.size(); ++i)
        std::fprintf(f, "%s,%s,%.17g,%.17g\n", curve.attack.c_str(),
                     curve.defense_model.c_str(), curve.epsilons[i], curve.accuracies[i]);
    std::fclose(f);
}

void write_histogram_csv(const std::vector<Histogram>& histograms, const std::string& path) {
    std::FILE* f = open_write(path);
    std::fputs("method,step,bin_left,bin_right,count\n", f);
    for (const Histogram& h : histograms)
        for (std::size_t i = 0; i < h.counts.size(); ++i)
            std::fprintf(f, "%s,%zu,%.17g,%.17g,%zu\n", h.method.c_str(), h.step,
                         h.edges[i], h.edges[i + 1], h.counts[i]);
    std::fclose(f);
}

SecurityCurve read_security_curve_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "attack,defense_model,epsilon,adversarial_accuracy")
        throw std::invalid_argument("security curve csv: bad header in '" + path + "'");

    SecurityCurve curve;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 4)
            throw std::invalid_argument("security curve csv: line " + std::to_string(lineno) +
                                        " has " + std::to_string(fields.size()) +
                                        " fields, expected 4");
        const auto parse_real = [&](const std::string& s) {
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (end == s.c_str() || *end != '\0')
                throw std::invalid_argument("security curve csv: line " +
                                            std::to_string(lineno) + ": bad number '" + s +
                                            "'");
            return v;
        };
        if (curve.epsilons.empty()) {
            curve.attack = fields[0];
            curve.defense_model = fields[1];
        } else if (fields[0] != curve.attack || fields[1] != curve.defense_model) {
            throw std::invalid_argument("security curve csv: line " + std::to_string(lineno) +
                                        " switches attack or model labels");
        }
        curve.epsilons.push_back(parse_real(fields[2]));
        curve.accuracies.push_back(parse_real(fields[3]));
    }
    if (curve.epsilons.empty())
        throw std::invalid_argument("security curve csv: no data rows in '" + path + "'");
    return curve;
}

namespace {

/// White-to-color ramp; t in [0,1].
void ramp(double t, int target_r, int target_g, int target_b, int& r, int& g, int& b) {
    r = static_cast<int>(std::lround(255.0 + (target_r - 255.0) * t));
    g = static_cast<int>(std::lround(255.0 + (target_g - 255.0) * t));
    b = static_cast<int>(std::lround(255.0 + (target_b - 255.0) * t));
}

}  // namespace

void write_histogram_svg(const Histogram& h, const std::string& path) {
    const std::size_t bins = h.counts.size();
    const int bar_w = 6, height = 220, margin = 24, base = height - margin;
    const int width = static_cast<int>(bins) * bar_w + 2 * margin;
    std::size_t peak = 1;
    for (std::size_t c : h.counts) peak = std::max(peak, c);

    std::FILE* f = open_write(path);
    std::fprintf(f,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                 "viewBox=\"0 0 %d %d\">\n",
                 width, height, width, height);
    std::fprintf(f, "<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n", width, height);
    std::fprintf(f,
                 "<text x=\"%d\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">"
                 "%s step %zu, budget %.3g</text>\n",
                 margin, h.method.c_str(), h.step, h.epsilon);
    for (std::size_t i = 0; i < bins; ++i) {
        if (h.counts[i] == 0) continue;
        const int bh = static_cast<int>(std::lround(
            static_cast<double>(h.counts[i]) / static_cast<double>(peak) * (base - margin)));
        std::fprintf(f,
                     "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                     "fill=\"#4477aa\"/>\n",
                     margin + static_cast<int>(i) * bar_w, base - bh, bar_w - 1,
                     std::max(bh, 1));
    }
    std::fprintf(f, "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n",
                 margin, base, width - margin, base);
    std::fputs("</svg>\n", f);
    std::fclose(f);
}

void write_heatmap_svg(const Tensor& field, const std::string& path) {
    if (field.rank() != 2)
        throw std::invalid_argument("heatmap: expected a [H,W] field, got " +
                                    shape_str(field.shape()));
    const std::size_t h = field.dim(0), w = field.dim(1);
    const int cell = 10;
    double vmax = max_abs(field);
    if (vmax == 0.0) vmax = 1.0;

    std::FILE* f = open_write(path);
    std::fprintf(f,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%zu\" height=\"%zu\" "
                 "viewBox=\"0 0 %zu %zu\">\n",
                 w * cell, h * cell, w * cell, h * cell);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const double v = field[r * w + c];
            const double t = std::min(std::abs(v) / vmax, 1.0);
            int cr, cg, cb;
            if (v >= 0.0)
                ramp(t, 178, 24, 43, cr, cg, cb);  // white -> red for positive
            else
                ramp(t, 33, 102, 172, cr, cg, cb);  // white -> blue for negative
            std::fprintf(f,
                         "<rect x=\"%zu\" y=\"%zu\" width=\"%d\" height=\"%d\" "
                         "fill=\"rgb(%d,%d,%d)\"/>\n",
                         c * cell, r * cell, cell, cell, cr, cg, cb);
        }
    }
    std::fputs("</svg>\n", f);
    std::fclose(f);
}

}  // namespace sadv
