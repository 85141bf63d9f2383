#include "sadv/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sadv/attacks.hpp"
#include "sadv/gradcheck.hpp"
#include "sadv/matmul.hpp"
#include "sadv/spectral.hpp"

namespace sadv {
namespace {

constexpr double kTiny = 1e-300;

double orthogonality_error(const Tensor& b) {
    const std::size_t n = b.dim(0);
    std::vector<double> bt(n * n), gram(n * n);
    transpose(b.data(), bt.data(), n, n);
    matmul(bt.data(), b.data(), gram.data(), n, n, n);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            err = std::max(err, std::abs(gram[i * n + j] - (i == j ? 1.0 : 0.0)));
    return err;
}

/// Round-trip through an explicitly supplied basis pair, so a corrupted
/// basis shows up here rather than being masked by the library transform.
double round_trip_error(const Tensor& x, const Tensor& bh, const Tensor& bw) {
    const std::size_t h = bh.dim(0), w = bw.dim(0);
    const std::size_t planes = x.numel() / (h * w);
    std::vector<double> bht(h * h), bwt(w * w), t1(h * w), z(h * w), t2(h * w), back(h * w);
    transpose(bh.data(), bht.data(), h, h);
    transpose(bw.data(), bwt.data(), w, w);
    double err = 0.0;
    for (std::size_t p = 0; p < planes; ++p) {
        const double* plane = x.data() + p * h * w;
        matmul(bh.data(), plane, t1.data(), h, h, w);
        matmul(t1.data(), bwt.data(), z.data(), h, w, w);
        matmul(bht.data(), z.data(), t2.data(), h, h, w);
        matmul(t2.data(), bw.data(), back.data(), h, w, w);
        for (std::size_t i = 0; i < h * w; ++i)
            err = std::max(err, std::abs(back[i] - plane[i]));
    }
    return err;
}

double transport_error(const Model& m, const SpectralPlan& plan, const Tensor& x,
                       const std::vector<int>& y) {
    BoundModel pix = bind_pixel(m, x.dim(0));
    pix.set_batch(x, y);
    pix.forward_loss();
    pix.graph.backward(pix.loss, {pix.input});
    const Tensor carried = plan.dct2(pix.graph.adjoint(pix.input));

    BoundModel frq = bind_frequency(m, x.dim(0), plan);
    frq.set_batch(plan.dct2(x), y);
    frq.forward_loss();
    frq.graph.backward(frq.loss, {frq.input});
    const Tensor direct = frq.graph.adjoint(frq.input);

    const double scale = std::max({max_abs(direct), max_abs(carried), kTiny});
    return max_abs_diff(direct, carried) / scale;
}

double trajectory_error(const Model& m, const SpectralPlan& plan, const Tensor& x,
                        const std::vector<int>& y, double lo, double hi, std::size_t steps) {
    AttackConfig cfg;
    cfg.epsilon = 0.3;
    cfg.step_size = 25.0;
    cfg.steps = std::max<std::size_t>(steps, 1);
    cfg.momentum = 0.75;
    cfg.random_init = true;
    cfg.lo = lo;
    cfg.hi = hi;
    cfg.seed = 31;

    BoundModel frq = bind_frequency(m, x.dim(0), plan);
    cfg.method = AttackMethod::SPGD;
    const PerturbationTrace spectral = spgd(frq, x, y, cfg, plan);

    BoundModel pix = bind_pixel(m, x.dim(0));
    cfg.method = AttackMethod::NoSignPGD;
    const PerturbationTrace pixel = nosign_pgd(pix, x, y, cfg);

    double err = 0.0;
    for (std::size_t i = 0; i < cfg.steps; ++i) {
        const Tensor& a = spectral.steps[i].x_adv;
        const Tensor& b = pixel.steps[i].x_adv;
        const double scale = std::max({max_abs(a), max_abs(b), kTiny});
        err = std::max(err, max_abs_diff(a, b) / scale);
    }
    return err;
}

CheckResult make_result(std::string name, double err, double threshold) {
    CheckResult r;
    r.name = std::move(name);
    r.max_err = err;
    r.threshold = threshold;
    r.pass = err <= threshold;
    return r;
}

}  // namespace

std::vector<CheckResult> run_verification(const Model& m, const Dataset& d,
                                          const VerifyOptions& opt) {
    if (d.size() == 0) throw std::invalid_argument("verification needs a non-empty dataset");
    const std::size_t batch = std::min(std::max<std::size_t>(opt.batch, 1), d.size());
    const Tensor x = batch_images(d, 0, batch);
    const std::vector<int> y = batch_labels(d, 0, batch);
    const std::size_t h = x.dim(2), w = x.dim(3);
    const SpectralPlan plan(h, w);

    Tensor bh = dct_basis(h), bw = dct_basis(w);
    if (opt.corrupt_dct_basis) bh[1] += 1e-3;

    std::vector<CheckResult> out;
    out.push_back(make_result(
        "dct-orthogonality",
        std::max(orthogonality_error(bh), orthogonality_error(bw)), 1e-10));
    out.push_back(make_result("dct-round-trip", round_trip_error(x, bh, bw), 1e-10));
    out.push_back(make_result("gradient-transport", transport_error(m, plan, x, y), 1e-8));
    out.push_back(make_result(
        "trajectory-equivalence",
        trajectory_error(m, plan, x, y, d.lo, d.hi, opt.trajectory_steps), 1e-6));

    const std::size_t fd_batch = std::min<std::size_t>(2, batch);
    BoundModel b = bind_pixel(m, fd_batch);
    b.set_batch(batch_images(d, 0, fd_batch), batch_labels(d, 0, fd_batch));
    out.push_back(make_result(
        "finite-difference-input",
        gradient_check(b.graph, b.loss, b.input, opt.fd_step, 64).max_rel_err, 1e-4));

    double weight_err = 0.0;
    const std::vector<int> picks = {b.param_nodes.front(),
                                    b.param_nodes[b.param_nodes.size() - 2]};
    for (int node : picks)
        weight_err = std::max(
            weight_err, gradient_check(b.graph, b.loss, node, opt.fd_step, 64).max_rel_err);
    out.push_back(make_result("finite-difference-weights", weight_err, 1e-4));
    return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

std::string format_verification(const std::vector<CheckResult>& results) {
    std::string out;
    char line[160];
    std::size_t failed = 0;
    for (const CheckResult& r : results) {
        std::snprintf(line, sizeof line, "check %-26s max_err %-12.3e threshold %-9.0e %s\n",
                      r.name.c_str(), r.max_err, r.threshold, r.pass ? "PASS" : "FAIL");
        out += line;
        if (!r.pass) ++failed;
    }
    if (failed == 0) {
        std::snprintf(line, sizeof line, "verification: all %zu checks passed\n", results.size());
    } else {
        std::snprintf(line, sizeof line, "verification: %zu of %zu checks FAILED\n", failed,
                      results.size());
    }
    out += line;
    return out;
}

}  // namespace sadv
