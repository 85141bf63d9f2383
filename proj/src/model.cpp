#include "sadv/model.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sadv/rng.hpp"

namespace sadv {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(item);
    return out;
}

std::size_t parse_nonneg(const std::string& tok, const std::string& what) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("architecture: bad " + what + " '" + tok + "'");
    }
    if (pos != tok.size())
        throw std::invalid_argument("architecture: bad " + what + " '" + tok + "'");
    return static_cast<std::size_t>(v);
}

std::size_t parse_count(const std::string& tok, const std::string& what) {
    const std::size_t v = parse_nonneg(tok, what);
    if (v == 0) throw std::invalid_argument("architecture: " + what + " must be positive");
    return v;
}

double parse_real(const std::string& tok, const std::string& what) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("architecture: bad " + what + " '" + tok + "'");
    }
    if (pos != tok.size())
        throw std::invalid_argument("architecture: bad " + what + " '" + tok + "'");
    return v;
}

}  // namespace

ModelSpec ModelSpec::parse(const std::string& descriptor) {
    ModelSpec spec;
    spec.descriptor = descriptor;
    const std::vector<std::string> tokens = split(descriptor, ',');
    if (tokens.size() < 3)
        throw std::invalid_argument("architecture: need at least in:, range: and one layer");

    const auto in_parts = split(tokens[0], ':');
    if (in_parts.size() != 4 || in_parts[0] != "in")
        throw std::invalid_argument("architecture: first token must be in:C:H:W, got '" +
                                    tokens[0] + "'");
    spec.in_c = parse_count(in_parts[1], "channel count");
    spec.in_h = parse_count(in_parts[2], "input height");
    spec.in_w = parse_count(in_parts[3], "input width");

    const auto range_parts = split(tokens[1], ':');
    if (range_parts.size() != 3 || range_parts[0] != "range")
        throw std::invalid_argument("architecture: second token must be range:LO:HI, got '" +
                                    tokens[1] + "'");
    spec.lo = parse_real(range_parts[1], "range low");
    spec.hi = parse_real(range_parts[2], "range high");
    if (!(spec.lo < spec.hi))
        throw std::invalid_argument("architecture: range low must be below range high");

    // track the running activation shape to validate the stack
    std::size_t c = spec.in_c, h = spec.in_h, w = spec.in_w;
    bool flat = false;
    std::size_t features = 0;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
        const auto parts = split(tokens[t], ':');
        const std::string& kind = parts[0];
        LayerSpec layer{};
        if (kind == "conv") {
            if (parts.size() != 4)
                throw std::invalid_argument("architecture: conv needs conv:F:K:P, got '" +
                                            tokens[t] + "'");
            if (flat) throw std::invalid_argument("architecture: conv after flatten");
            layer.kind = LayerSpec::Kind::Conv;
            layer.filters = parse_count(parts[1], "filter count");
            layer.kernel = parse_count(parts[2], "kernel size");
            layer.pad = parse_nonneg(parts[3], "padding");
            if (h + 2 * layer.pad < layer.kernel || w + 2 * layer.pad < layer.kernel)
                throw std::invalid_argument("architecture: kernel exceeds padded input at '" +
                                            tokens[t] + "'");
            c = layer.filters;
            h = h + 2 * layer.pad - layer.kernel + 1;
            w = w + 2 * layer.pad - layer.kernel + 1;
        } else if (kind == "relu") {
            if (parts.size() != 1)
                throw std::invalid_argument("architecture: relu takes no arguments");
            layer.kind = LayerSpec::Kind::Relu;
        } else if (kind == "pool2") {
            if (parts.size() != 1)
                throw std::invalid_argument("architecture: pool2 takes no arguments");
            if (flat) throw std::invalid_argument("architecture: pool2 after flatten");
            if (h % 2 != 0 || w % 2 != 0)
                throw std::invalid_argument("architecture: pool2 needs even spatial extents, have " +
                                            std::to_string(h) + "x" + std::to_string(w));
            layer.kind = LayerSpec::Kind::Pool;
            h /= 2;
            w /= 2;
        } else if (kind == "flatten") {
            if (parts.size() != 1)
                throw std::invalid_argument("architecture: flatten takes no arguments");
            if (flat) throw std::invalid_argument("architecture: repeated flatten");
            layer.kind = LayerSpec::Kind::Flatten;
            flat = true;
            features = c * h * w;
        } else if (kind == "fc") {
            if (parts.size() != 2)
                throw std::invalid_argument("architecture: fc needs fc:U, got '" + tokens[t] + "'");
            if (!flat) throw std::invalid_argument("architecture: fc before flatten");
            layer.kind = LayerSpec::Kind::Fc;
            layer.units = parse_count(parts[1], "unit count");
            features = layer.units;
        } else {
            throw std::invalid_argument("architecture: unknown layer '" + tokens[t] + "'");
        }
        spec.layers.push_back(layer);
    }
    if (spec.layers.empty() || spec.layers.back().kind != LayerSpec::Kind::Fc)
        throw std::invalid_argument("architecture: must end in an fc layer (the logits)");
    spec.classes = features;
    return spec;
}

Model Model::init(const std::string& descriptor, std::uint64_t seed) {
    Model m;
    m.spec = ModelSpec::parse(descriptor);
    std::mt19937_64 rng(mix_seed(seed, 0x1417));
    std::size_t c = m.spec.in_c, h = m.spec.in_h, w = m.spec.in_w;
    std::size_t conv_idx = 0, fc_idx = 0, features = 0;
    for (const LayerSpec& layer : m.spec.layers) {
        switch (layer.kind) {
            case LayerSpec::Kind::Conv: {
                ++conv_idx;
                const std::size_t fan_in = c * layer.kernel * layer.kernel;
                const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
                Tensor weight({layer.filters, c, layer.kernel, layer.kernel});
                uniform_fill(weight, -limit, limit, rng);
                m.params.emplace_back("conv" + std::to_string(conv_idx) + ".weight",
                                      std::move(weight));
                m.params.emplace_back("conv" + std::to_string(conv_idx) + ".bias",
                                      Tensor({layer.filters}));
                c = layer.filters;
                h = h + 2 * layer.pad - layer.kernel + 1;
                w = w + 2 * layer.pad - layer.kernel + 1;
                break;
            }
            case LayerSpec::Kind::Pool:
                h /= 2;
                w /= 2;
                break;
            case LayerSpec::Kind::Flatten:
                features = c * h * w;
                break;
            case LayerSpec::Kind::Fc: {
                ++fc_idx;
                const double limit = std::sqrt(6.0 / static_cast<double>(features));
                Tensor weight({features, layer.units});
                uniform_fill(weight, -limit, limit, rng);
                m.params.emplace_back("fc" + std::to_string(fc_idx) + ".weight",
                                      std::move(weight));
                m.params.emplace_back("fc" + std::to_string(fc_idx) + ".bias",
                                      Tensor({layer.units}));
                features = layer.units;
                break;
            }
            case LayerSpec::Kind::Relu:
                break;
        }
    }
    return m;
}

const Tensor& Model::param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return t;
    throw std::invalid_argument("model: no parameter named '" + name + "'");
}

namespace {

BoundModel bind(const Model& m, std::size_t batch, const SpectralPlan* plan) {
    if (batch == 0) throw std::invalid_argument("bind: batch size must be positive");
    BoundModel b;
    b.batch = batch;
    b.frequency_domain = plan != nullptr;
    Graph& g = b.graph;
    b.input = g.input(Tensor({batch, m.spec.in_c, m.spec.in_h, m.spec.in_w}));
    int cur = b.input;
    if (plan) {
        if (plan->height() != m.spec.in_h || plan->width() != m.spec.in_w)
            throw std::invalid_argument("bind: transform plan does not match model input size");
        cur = g.linmap2d(cur, plan->basis_h_t(), plan->basis_w());
    }
    std::size_t next_param = 0;
    auto take = [&](const char* what) {
        if (next_param >= m.params.size())
            throw std::logic_error(std::string("bind: missing parameter for ") + what);
        int node = g.input(m.params[next_param].second);
        ++next_param;
        b.param_nodes.push_back(node);
        return node;
    };
    std::size_t c = m.spec.in_c, h = m.spec.in_h, w = m.spec.in_w;
    for (const LayerSpec& layer : m.spec.layers) {
        switch (layer.kind) {
            case LayerSpec::Kind::Conv: {
                int wnode = take("conv weight");
                int bnode = take("conv bias");
                cur = g.bias_add(g.conv2d(cur, wnode, static_cast<int>(layer.pad)), bnode);
                c = layer.filters;
                h = h + 2 * layer.pad - layer.kernel + 1;
                w = w + 2 * layer.pad - layer.kernel + 1;
                break;
            }
            case LayerSpec::Kind::Relu:
                cur = g.relu(cur);
                break;
            case LayerSpec::Kind::Pool:
                cur = g.maxpool2x2(cur);
                h /= 2;
                w /= 2;
                break;
            case LayerSpec::Kind::Flatten:
                cur = g.reshape(cur, {batch, c * h * w});
                break;
            case LayerSpec::Kind::Fc: {
                int wnode = take("fc weight");
                int bnode = take("fc bias");
                cur = g.bias_add(g.matmul(cur, wnode), bnode);
                break;
            }
        }
    }
    b.logits = cur;
    b.loss = g.softmax_cross_entropy(cur, std::vector<int>(batch, 0));
    return b;
}

}  // namespace

BoundModel bind_pixel(const Model& m, std::size_t batch) { return bind(m, batch, nullptr); }

BoundModel bind_frequency(const Model& m, std::size_t batch, const SpectralPlan& plan) {
    return bind(m, batch, &plan);
}

void BoundModel::set_batch(const Tensor& x, const std::vector<int>& labels) {
    graph.set_input(input, x);
    graph.set_labels(loss, labels);
}

void BoundModel::sync_params(const Model& m) {
    if (m.params.size() != param_nodes.size())
        throw std::invalid_argument("sync_params: parameter count mismatch");
    for (std::size_t i = 0; i < param_nodes.size(); ++i)
        graph.set_input(param_nodes[i], m.params[i].second);
}

double BoundModel::forward_loss() { return graph.forward(loss)[0]; }

std::vector<int> BoundModel::predictions() const {
    const Tensor& l = graph.value(logits);
    const std::size_t n = l.dim(0), k = l.dim(1);
    std::vector<int> out(n);
    for (std::size_t s = 0; s < n; ++s) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (l[s * k + j] > l[s * k + best]) best = j;
        out[s] = static_cast<int>(best);
    }
    return out;
}

}  // namespace sadv
