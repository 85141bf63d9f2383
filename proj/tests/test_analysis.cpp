#include "sadv/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "sadv/training.hpp"

using namespace sadv;

namespace {

const char* kTinyCnn =
    "in:1:28:28,range:0:1,conv:4:5:2,relu,pool2,conv:8:5:2,relu,pool2,flatten,"
    "fc:32,relu,fc:10";

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

}  // namespace

TEST_CASE("histograms conserve mass across every step") {
    Model m = Model::init(kTinyCnn, 3);
    Dataset d = synth_digits(2, 5);
    BoundModel b = bind_pixel(m, 2);
    AttackConfig cfg;
    cfg.method = AttackMethod::PGD;
    cfg.epsilon = 0.3;
    cfg.step_size = 0.1;
    cfg.steps = 3;
    cfg.random_init = true;
    const PerturbationTrace t =
        pgd(b, batch_images(d, 0, 2), batch_labels(d, 0, 2), cfg);

    const std::vector<Histogram> hs = component_histograms(t, 101, cfg.epsilon, "pgd");
    CHECK(hs.size() == 3);
    for (const Histogram& h : hs) {
        CHECK(h.edges.size() == 102);
        CHECK(h.counts.size() == 101);
        std::size_t total = 0;
        for (std::size_t c : h.counts) total += c;
        CHECK(total == t.x_nat.numel());
        for (std::size_t i = 1; i < h.edges.size(); ++i) CHECK(h.edges[i] > h.edges[i - 1]);
        CHECK(h.edges.front() == -1.25 * cfg.epsilon);
        CHECK(h.edges.back() == 1.25 * cfg.epsilon);
    }
}

TEST_CASE("zero perturbations land in the central bin") {
    Model m = Model::init(kTinyCnn, 5);
    Dataset d = synth_digits(2, 9);
    BoundModel b = bind_pixel(m, 2);
    AttackConfig cfg;
    cfg.method = AttackMethod::PGD;
    cfg.epsilon = 0.3;
    cfg.step_size = 0.0;  // never moves
    cfg.steps = 2;
    cfg.random_init = false;
    const PerturbationTrace t =
        pgd(b, batch_images(d, 0, 2), batch_labels(d, 0, 2), cfg);

    const std::vector<Histogram> hs = component_histograms(t, 101, cfg.epsilon, "pgd");
    for (const Histogram& h : hs) {
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            if (i == 50) CHECK(h.counts[i] == t.x_nat.numel());
            else CHECK(h.counts[i] == 0);
        }
    }
}

TEST_CASE("quantized first step occupies exactly the three sign bins") {
    Model m = Model::init(kTinyCnn, 7);
    Dataset d = synth_digits(2, 13);
    BoundModel b = bind_pixel(m, 2);
    Tensor x = batch_images(d, 0, 2);
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = 0.35 + 0.3 * x[i];  // interior

    AttackConfig cfg;
    cfg.method = AttackMethod::PGD;
    cfg.epsilon = 0.3;
    cfg.step_size = 0.075;  // budget / 4
    cfg.steps = 1;
    cfg.random_init = false;
    const PerturbationTrace t = pgd(b, x, batch_labels(d, 0, 2), cfg);

    const std::vector<Histogram> hs = component_histograms(t, 101, cfg.epsilon, "pgd");
    std::size_t covered = 0;
    for (std::size_t i = 0; i < hs[0].counts.size(); ++i) {
        if (i == 40 || i == 50 || i == 60) covered += hs[0].counts[i];
        else CHECK(hs[0].counts[i] == 0);
    }
    CHECK(covered == t.x_nat.numel());
}

TEST_CASE("histogram validation") {
    PerturbationTrace empty;
    CHECK_THROWS_WITH_AS(component_histograms(empty, 101, 0.3, "pgd"),
                         doctest::Contains("empty trace"), std::invalid_argument);
    PerturbationTrace t;
    t.x_nat = Tensor(Shape{4});
    t.steps.resize(1);
    t.steps[0].x_adv = Tensor(Shape{4});
    CHECK_THROWS_WITH_AS(component_histograms(t, 1, 0.3, "pgd"),
                         doctest::Contains("two bins"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(component_histograms(t, 101, 0.0, "pgd"),
                         doctest::Contains("positive"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(component_histograms(t, 101, 0.3, "pg,d"),
                         doctest::Contains("free of commas"), std::invalid_argument);
}

TEST_CASE("fraction below matches a direct count") {
    PerturbationTrace t;
    t.x_nat = Tensor({1, 1, 1, 4}, {0.0, 0.0, 0.0, 0.0});
    t.steps.resize(1);
    t.steps[0].x_adv = Tensor({1, 1, 1, 4}, {0.1, -0.2, 0.0, 0.3});
    CHECK(fraction_below(t, 0, 0.25) == 0.75);
    CHECK(fraction_below(t, 0, 0.05) == 0.25);
    CHECK(fraction_below(t, 0, 1.0) == 1.0);
}

TEST_CASE("linear model heatmaps match the closed form") {
    Model m = Model::init("in:1:4:4,range:-100:100,flatten,fc:2", 1);
    Tensor w(Shape{16});
    for (std::size_t i = 0; i < 16; ++i) w[i] = 0.25 * static_cast<double>(i) - 1.0;
    for (auto& [name, p] : m.params) {
        if (name == "fc1.weight") {
            for (std::size_t i = 0; i < 16; ++i) {
                p[i * 2 + 0] = w[i];
                p[i * 2 + 1] = 0.0;
            }
        } else {
            p.fill(0.0);
        }
    }

    SpectralPlan plan(4, 4);
    Tensor x(Shape{1, 4, 4});
    x.fill(0.0);
    const GradientMaps maps = gradient_heatmaps(m, x, 1, plan);

    // At x = 0 the logits tie, so the gradient is exactly half of w.
    Tensor expected(Shape{4, 4});
    for (std::size_t i = 0; i < 16; ++i) expected[i] = 0.5 * w[i];
    CHECK(max_abs_diff(maps.pixel_grad, expected) < 1e-15);
    CHECK(max_abs_diff(maps.freq_grad, plan.dct2(expected)) < 1e-10);
}

TEST_CASE("frequency field equals the transformed pixel field") {
    Model m = Model::init(kTinyCnn, 11);
    Dataset d = synth_digits(1, 17);
    SpectralPlan plan(28, 28);
    const Tensor x = batch_images(d, 0, 1).reshaped({1, 28, 28});
    const GradientMaps maps = gradient_heatmaps(m, x, d.labels[0], plan);
    CHECK(max_abs_diff(maps.freq_grad, plan.dct2(maps.pixel_grad)) < 1e-10);
    CHECK(max_abs(maps.pixel_grad) > 0.0);
}

TEST_CASE("band energies sum to one and localize impulses") {
    Tensor low(Shape{8, 8}), high(Shape{8, 8});
    low.fill(0.0);
    high.fill(0.0);
    low[0] = 3.0;          // (0,0): lowest Manhattan index
    high[63] = -2.0;       // (7,7): highest Manhattan index
    const auto lo_e = band_energies(low);
    CHECK(lo_e[0] == 1.0);
    CHECK(lo_e[1] + lo_e[2] + lo_e[3] == 0.0);
    const auto hi_e = band_energies(high);
    CHECK(hi_e[3] == 1.0);

    Tensor mixed(Shape{8, 8});
    for (std::size_t i = 0; i < 64; ++i) mixed[i] = std::sin(static_cast<double>(i));
    const auto e = band_energies(mixed);
    CHECK(std::abs(e[0] + e[1] + e[2] + e[3] - 1.0) < 1e-12);
    for (double v : e) CHECK(v >= 0.0);

    CHECK_THROWS_WITH_AS(band_energies(Tensor(Shape{2, 2, 2})), doctest::Contains("[H,W]"),
                         std::invalid_argument);
}

TEST_CASE("step table first row equals single-step evaluation") {
    Model m = Model::init(kTinyCnn, 13);
    Dataset d = synth_digits(50, 19);

    AttackConfig cfg;
    cfg.method = AttackMethod::PGD;
    cfg.epsilon = 0.3;
    cfg.step_size = 0.3;
    cfg.steps = 1;
    cfg.random_init = true;
    cfg.seed = 5;
    const std::vector<StepTableRow> rows = attack_step_table(m, d, {{"pgd", cfg}}, 20);
    REQUIRE(rows.size() == 1);

    AttackConfig single = cfg;
    single.method = AttackMethod::FGSM;
    const EvalResult ev = evaluate(m, d, &single, 20);
    CHECK(rows[0].adversarial_accuracy == ev.accuracy);
    CHECK(rows[0].adversarial_loss == ev.mean_loss);
}

TEST_CASE("step table validation") {
    Model m = Model::init(kTinyCnn, 17);
    Dataset d = synth_digits(10, 23);
    AttackConfig a;
    a.method = AttackMethod::PGD;
    a.epsilon = 0.3;
    AttackConfig b = a;
    b.epsilon = 0.2;

    CHECK_THROWS_WITH_AS(attack_step_table(m, d, {}, 10), doctest::Contains("no attacks"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(attack_step_table(m, d, {{"a", a}, {"b", b}}, 10),
                         doctest::Contains("share epsilon"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(attack_step_table(m, d, {{"a,b", a}}, 10),
                         doctest::Contains("free of commas"), std::invalid_argument);
}

TEST_CASE("security curve anchors exactly at natural accuracy") {
    Model m = Model::init(kTinyCnn, 19);
    Dataset d = synth_digits(40, 29);
    AttackConfig tmpl;
    tmpl.method = AttackMethod::PGD;
    tmpl.step_size = 0.1;
    tmpl.steps = 2;

    const SecurityCurve c =
        security_curve(m, d, tmpl, {0.0, 0.1, 0.3}, 20, "pgd", "standard");
    CHECK(c.epsilons.size() == 3);
    CHECK(c.accuracies[0] == evaluate(m, d, nullptr, 20).accuracy);
    for (double a : c.accuracies) {
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }

    CHECK_THROWS_WITH_AS(security_curve(m, d, tmpl, {0.1, 0.2}, 20, "pgd", "standard"),
                         doctest::Contains("start at 0"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(security_curve(m, d, tmpl, {0.0, 0.2, 0.2}, 20, "pgd", "standard"),
                         doctest::Contains("ascending"), std::invalid_argument);
}

TEST_CASE("csv emitters are deterministic and round-trip") {
    SecurityCurve curve;
    curve.attack = "pgd";
    curve.defense_model = "standard";
    curve.epsilons = {0.0, 0.1, 0.30000000000000004};
    curve.accuracies = {0.97999999999999998, 0.5, 1.0 / 3.0};

    const std::string path = "analysis_curve_test.csv";
    write_security_curve_csv(curve, path);
    const std::string first = slurp(path);
    write_security_curve_csv(curve, path);
    CHECK(slurp(path) == first);
    CHECK(first.find("attack,defense_model,epsilon,adversarial_accuracy\n") == 0);
    CHECK(first.find("\r") == std::string::npos);

    const SecurityCurve back = read_security_curve_csv(path);
    CHECK(back.attack == curve.attack);
    CHECK(back.defense_model == curve.defense_model);
    REQUIRE(back.epsilons.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.epsilons[i] == curve.epsilons[i]);
        CHECK(back.accuracies[i] == curve.accuracies[i]);
    }
    std::remove(path.c_str());

    Histogram h;
    h.method = "pgd";
    h.step = 1;
    h.epsilon = 0.3;
    h.edges = {-0.375, 0.0, 0.375};
    h.counts = {3, 7};
    const std::string hpath = "analysis_hist_test.csv";
    write_histogram_csv({h}, hpath);
    const std::string htext = slurp(hpath);
    CHECK(count_occurrences(htext, "\n") == 3);  // header + one row per bin
    CHECK(htext.find("pgd,1,-0.375,0,3\n") != std::string::npos);
    std::remove(hpath.c_str());

    const std::string spath = "analysis_steps_test.csv";
    write_step_table_csv({{"spgd", 1, 0.5, 2.25}}, spath);
    CHECK(slurp(spath) ==
          "method,step,adversarial_accuracy,adversarial_loss\nspgd,1,0.5,2.25\n");
    std::remove(spath.c_str());
}

TEST_CASE("csv reader rejects malformed input") {
    const std::string path = "analysis_bad_test.csv";
    {
        std::ofstream out(path, std::ios::binary);
        out << "wrong,header\n";
    }
    CHECK_THROWS_WITH_AS(read_security_curve_csv(path), doctest::Contains("bad header"),
                         std::invalid_argument);
    {
        std::ofstream out(path, std::ios::binary);
        out << "attack,defense_model,epsilon,adversarial_accuracy\npgd,std,0.0\n";
    }
    CHECK_THROWS_WITH_AS(read_security_curve_csv(path), doctest::Contains("expected 4"),
                         std::invalid_argument);
    {
        std::ofstream out(path, std::ios::binary);
        out << "attack,defense_model,epsilon,adversarial_accuracy\npgd,std,zero,1\n";
    }
    CHECK_THROWS_WITH_AS(read_security_curve_csv(path), doctest::Contains("bad number"),
                         std::invalid_argument);
    std::remove(path.c_str());
}

TEST_CASE("svg emitters produce stable well-formed files") {
    Tensor field({2, 3}, {0.5, -1.0, 0.0, 0.25, -0.125, 1.0});
    const std::string path = "analysis_heatmap_test.svg";
    write_heatmap_svg(field, path);
    const std::string first = slurp(path);
    write_heatmap_svg(field, path);
    CHECK(slurp(path) == first);
    CHECK(first.find("<svg") == 0);
    CHECK(count_occurrences(first, "<rect") == 6);
    CHECK(first.find("rgb(255,255,255)") != std::string::npos);  // the zero cell
    std::remove(path.c_str());

    Histogram h;
    h.method = "spgd";
    h.step = 2;
    h.epsilon = 0.3;
    h.edges = {-0.375, -0.125, 0.125, 0.375};
    h.counts = {1, 5, 2};
    const std::string hpath = "analysis_hist_test.svg";
    write_histogram_svg(h, hpath);
    const std::string htext = slurp(hpath);
    CHECK(htext.find("<svg") == 0);
    CHECK(htext.find("spgd step 2") != std::string::npos);
    std::remove(hpath.c_str());
}
