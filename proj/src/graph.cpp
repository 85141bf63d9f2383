#include "sadv/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

#include "sadv/matmul.hpp"

namespace sadv {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Add: return "add";
        case Op::ScalarMul: return "scalar_mul";
        case Op::Mul: return "mul";
        case Op::MatMul: return "matmul";
        case Op::Conv2d: return "conv2d";
        case Op::BiasAdd: return "bias_add";
        case Op::MaxPool2x2: return "maxpool2x2";
        case Op::Relu: return "relu";
        case Op::Reshape: return "reshape";
        case Op::LinMap2d: return "linmap2d";
        case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "?";
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

int Graph::push(Node node, Shape out_shape) {
    nodes_.push_back(std::move(node));
    values_.emplace_back(std::move(out_shape));
    return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_id(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("graph: node id " + std::to_string(id) + " out of range");
}

const Graph::Node& Graph::at(int id) const {
    check_id(id);
    return nodes_[id];
}

int Graph::input(Tensor value) {
    Node n;
    n.op = Op::Input;
    Shape shape = value.shape();
    int id = push(std::move(n), shape);
    values_[id] = std::move(value);
    return id;
}

int Graph::add(int a, int b) {
    check_id(a);
    check_id(b);
    require(values_[a].same_shape(values_[b]),
            "add: shape mismatch " + shape_str(values_[a].shape()) + " vs " +
                shape_str(values_[b].shape()));
    Node n;
    n.op = Op::Add;
    n.in0 = a;
    n.in1 = b;
    return push(std::move(n), values_[a].shape());
}

int Graph::scalar_mul(double s, int a) {
    check_id(a);
    Node n;
    n.op = Op::ScalarMul;
    n.in0 = a;
    n.scalar = s;
    return push(std::move(n), values_[a].shape());
}

int Graph::mul(int a, int b) {
    check_id(a);
    check_id(b);
    require(values_[a].same_shape(values_[b]),
            "mul: shape mismatch " + shape_str(values_[a].shape()) + " vs " +
                shape_str(values_[b].shape()));
    Node n;
    n.op = Op::Mul;
    n.in0 = a;
    n.in1 = b;
    return push(std::move(n), values_[a].shape());
}

int Graph::matmul(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = values_[a];
    const Tensor& tb = values_[b];
    require(ta.rank() == 2 && tb.rank() == 2, "matmul: both operands must be rank 2");
    require(ta.dim(1) == tb.dim(0),
            "matmul: inner dimensions differ, " + shape_str(ta.shape()) + " * " +
                shape_str(tb.shape()));
    Node n;
    n.op = Op::MatMul;
    n.in0 = a;
    n.in1 = b;
    return push(std::move(n), {ta.dim(0), tb.dim(1)});
}

int Graph::conv2d(int x, int w, int pad) {
    check_id(x);
    check_id(w);
    const Tensor& tx = values_[x];
    const Tensor& tw = values_[w];
    require(tx.rank() == 4, "conv2d: input must be [N,C,H,W]");
    require(tw.rank() == 4, "conv2d: weights must be [F,C,KH,KW]");
    require(pad >= 0, "conv2d: padding must be non-negative");
    require(tw.dim(1) == tx.dim(1), "conv2d: channel count mismatch, input " +
                                        shape_str(tx.shape()) + " vs weights " +
                                        shape_str(tw.shape()));
    std::size_t oh = tx.dim(2) + 2 * pad + 1;
    std::size_t ow = tx.dim(3) + 2 * pad + 1;
    require(oh > tw.dim(2) && ow > tw.dim(3), "conv2d: kernel larger than padded input");
    oh -= tw.dim(2);
    ow -= tw.dim(3);
    Node n;
    n.op = Op::Conv2d;
    n.in0 = x;
    n.in1 = w;
    n.pad = pad;
    return push(std::move(n), {tx.dim(0), tw.dim(0), oh, ow});
}

int Graph::bias_add(int x, int bias) {
    check_id(x);
    check_id(bias);
    const Tensor& tx = values_[x];
    const Tensor& tb = values_[bias];
    require(tx.rank() >= 2, "bias_add: input must have a channel axis");
    require(tb.rank() == 1 && tb.dim(0) == tx.dim(1),
            "bias_add: bias shape " + shape_str(tb.shape()) + " does not match channel axis of " +
                shape_str(tx.shape()));
    Node n;
    n.op = Op::BiasAdd;
    n.in0 = x;
    n.in1 = bias;
    return push(std::move(n), tx.shape());
}

int Graph::maxpool2x2(int x) {
    check_id(x);
    const Tensor& tx = values_[x];
    require(tx.rank() == 4, "maxpool2x2: input must be [N,C,H,W]");
    require(tx.dim(2) % 2 == 0 && tx.dim(3) % 2 == 0,
            "maxpool2x2: spatial extents must be even, got " + shape_str(tx.shape()));
    Node n;
    n.op = Op::MaxPool2x2;
    n.in0 = x;
    return push(std::move(n), {tx.dim(0), tx.dim(1), tx.dim(2) / 2, tx.dim(3) / 2});
}

int Graph::relu(int x) {
    check_id(x);
    Node n;
    n.op = Op::Relu;
    n.in0 = x;
    return push(std::move(n), values_[x].shape());
}

int Graph::reshape(int x, Shape shape) {
    check_id(x);
    require(shape_numel(shape) == values_[x].numel(),
            "reshape: cannot view " + shape_str(values_[x].shape()) + " as " + shape_str(shape));
    Node n;
    n.op = Op::Reshape;
    n.in0 = x;
    return push(std::move(n), std::move(shape));
}

int Graph::linmap2d(int x, Tensor left, Tensor right) {
    check_id(x);
    const Tensor& tx = values_[x];
    require(tx.rank() == 4, "linmap2d: input must be [N,C,H,W]");
    require(left.rank() == 2 && right.rank() == 2, "linmap2d: maps must be matrices");
    require(left.dim(1) == tx.dim(2), "linmap2d: left map columns (" +
                                          std::to_string(left.dim(1)) +
                                          ") must match input rows of " + shape_str(tx.shape()));
    require(right.dim(0) == tx.dim(3), "linmap2d: right map rows (" +
                                           std::to_string(right.dim(0)) +
                                           ") must match input columns of " + shape_str(tx.shape()));
    Node n;
    n.op = Op::LinMap2d;
    n.in0 = x;
    Shape out{tx.dim(0), tx.dim(1), left.dim(0), right.dim(1)};
    n.left_t = Tensor({left.dim(1), left.dim(0)});
    transpose(left.data(), n.left_t.data(), left.dim(0), left.dim(1));
    n.right_t = Tensor({right.dim(1), right.dim(0)});
    transpose(right.data(), n.right_t.data(), right.dim(0), right.dim(1));
    n.left = std::move(left);
    n.right = std::move(right);
    return push(std::move(n), std::move(out));
}

int Graph::softmax_cross_entropy(int logits, std::vector<int> labels) {
    check_id(logits);
    const Tensor& tl = values_[logits];
    require(tl.rank() == 2, "softmax_cross_entropy: logits must be [N,K]");
    require(labels.size() == tl.dim(0),
            "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(tl.dim(0)) + " rows");
    for (int y : labels)
        require(y >= 0 && y < static_cast<int>(tl.dim(1)),
                "softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                    std::to_string(tl.dim(1)) + ")");
    Node n;
    n.op = Op::SoftmaxCrossEntropy;
    n.in0 = logits;
    n.labels = std::move(labels);
    n.softmax = Tensor(tl.shape());
    return push(std::move(n), {std::size_t{1}});
}

void Graph::set_input(int id, const Tensor& value) {
    check_id(id);
    if (nodes_[id].op != Op::Input)
        throw std::invalid_argument("set_input: node " + std::to_string(id) + " is " +
                                    op_name(nodes_[id].op) + ", not an input");
    if (!values_[id].same_shape(value))
        throw std::invalid_argument("set_input: shape " + shape_str(value.shape()) +
                                    " does not match bound shape " +
                                    shape_str(values_[id].shape()));
    std::copy(value.data(), value.data() + value.numel(), values_[id].data());
}

void Graph::set_labels(int id, std::vector<int> labels) {
    check_id(id);
    Node& n = nodes_[id];
    if (n.op != Op::SoftmaxCrossEntropy)
        throw std::invalid_argument("set_labels: node " + std::to_string(id) +
                                    " is not a softmax_cross_entropy node");
    const Tensor& tl = values_[n.in0];
    require(labels.size() == tl.dim(0),
            "set_labels: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(tl.dim(0)) + " rows");
    for (int y : labels)
        require(y >= 0 && y < static_cast<int>(tl.dim(1)),
                "set_labels: label " + std::to_string(y) + " outside [0, " +
                    std::to_string(tl.dim(1)) + ")");
    n.labels = std::move(labels);
}

const Tensor& Graph::value(int id) const {
    check_id(id);
    return values_[id];
}

const Tensor& Graph::adjoint(int id) const {
    check_id(id);
    if (adjoints_.size() != nodes_.size())
        throw std::logic_error("adjoint: backward has not been run");
    return adjoints_[id];
}

const Tensor& Graph::forward(int output) {
    check_id(output);
    for (int id = 0; id <= output; ++id) {
        forward_node(id);
        if (!values_[id].all_finite())
            throw std::runtime_error("forward: non-finite value in " +
                                     std::string(op_name(nodes_[id].op)) + " node " +
                                     std::to_string(id));
    }
    return values_[output];
}

void Graph::forward_node(int id) {
    Node& n = nodes_[id];
    Tensor& out = values_[id];
    switch (n.op) {
        case Op::Input:
            break;
        case Op::Add: {
            const double* a = values_[n.in0].data();
            const double* b = values_[n.in1].data();
            double* o = out.data();
            for (std::size_t i = 0; i < out.numel(); ++i) o[i] = a[i] + b[i];
            break;
        }
        case Op::ScalarMul: {
            const double* a = values_[n.in0].data();
            double* o = out.data();
            for (std::size_t i = 0; i < out.numel(); ++i) o[i] = n.scalar * a[i];
            break;
        }
        case Op::Mul: {
            const double* a = values_[n.in0].data();
            const double* b = values_[n.in1].data();
            double* o = out.data();
            for (std::size_t i = 0; i < out.numel(); ++i) o[i] = a[i] * b[i];
            break;
        }
        case Op::MatMul: {
            const Tensor& a = values_[n.in0];
            const Tensor& b = values_[n.in1];
            sadv::matmul(a.data(), b.data(), out.data(), a.dim(0), a.dim(1), b.dim(1));
            break;
        }
        case Op::Conv2d: {
            const Tensor& x = values_[n.in0];
            const Tensor& w = values_[n.in1];
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t F = w.dim(0), KH = w.dim(2), KW = w.dim(3);
            const std::size_t OH = out.dim(2), OW = out.dim(3);
            const std::size_t ckk = C * KH * KW, ohow = OH * OW;
            n.scratch.resize(ckk * ohow);
            const int pad = n.pad;
            for (std::size_t s = 0; s < N; ++s) {
                const double* xs = x.data() + s * C * H * W;
                // im2col: row (c,kh,kw), column (oh,ow)
                double* col = n.scratch.data();
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t kh = 0; kh < KH; ++kh)
                        for (std::size_t kw = 0; kw < KW; ++kw) {
                            double* row = col + ((c * KH + kh) * KW + kw) * ohow;
                            for (std::size_t oh = 0; oh < OH; ++oh) {
                                long ih = static_cast<long>(oh + kh) - pad;
                                if (ih < 0 || ih >= static_cast<long>(H)) {
                                    std::fill(row + oh * OW, row + (oh + 1) * OW, 0.0);
                                    continue;
                                }
                                const double* xrow = xs + (c * H + ih) * W;
                                for (std::size_t ow = 0; ow < OW; ++ow) {
                                    long iw = static_cast<long>(ow + kw) - pad;
                                    row[oh * OW + ow] =
                                        (iw < 0 || iw >= static_cast<long>(W)) ? 0.0 : xrow[iw];
                                }
                            }
                        }
                sadv::matmul(w.data(), col, out.data() + s * F * ohow, F, ckk, ohow);
            }
            break;
        }
        case Op::BiasAdd: {
            const Tensor& x = values_[n.in0];
            const Tensor& b = values_[n.in1];
            const std::size_t N = x.dim(0), C = x.dim(1);
            const std::size_t inner = x.numel() / (N * C);
            double* o = out.data();
            const double* xs = x.data();
            for (std::size_t s = 0; s < N; ++s)
                for (std::size_t c = 0; c < C; ++c) {
                    const double bc = b[c];
                    const std::size_t base = (s * C + c) * inner;
                    for (std::size_t i = 0; i < inner; ++i) o[base + i] = xs[base + i] + bc;
                }
            break;
        }
        case Op::MaxPool2x2: {
            const Tensor& x = values_[n.in0];
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t OH = H / 2, OW = W / 2;
            n.argmax.resize(out.numel());
            double* o = out.data();
            std::size_t oi = 0;
            for (std::size_t s = 0; s < N; ++s)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t plane = (s * C + c) * H * W;
                    for (std::size_t oh = 0; oh < OH; ++oh)
                        for (std::size_t ow = 0; ow < OW; ++ow) {
                            // ties keep the earliest (lowest flat index) element
                            std::size_t best = plane + (2 * oh) * W + 2 * ow;
                            double bv = x[best];
                            const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
                            for (std::size_t k : cand)
                                if (x[k] > bv) {
                                    bv = x[k];
                                    best = k;
                                }
                            o[oi] = bv;
                            n.argmax[oi] = static_cast<unsigned>(best);
                            ++oi;
                        }
                }
            break;
        }
        case Op::Relu: {
            const double* a = values_[n.in0].data();
            double* o = out.data();
            for (std::size_t i = 0; i < out.numel(); ++i) o[i] = a[i] > 0.0 ? a[i] : 0.0;
            break;
        }
        case Op::Reshape: {
            const Tensor& x = values_[n.in0];
            std::copy(x.data(), x.data() + x.numel(), out.data());
            break;
        }
        case Op::LinMap2d: {
            const Tensor& x = values_[n.in0];
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t H2 = n.left.dim(0), W2 = n.right.dim(1);
            n.scratch.resize(H2 * W);
            for (std::size_t p = 0; p < N * C; ++p) {
                sadv::matmul(n.left.data(), x.data() + p * H * W, n.scratch.data(), H2, H, W);
                sadv::matmul(n.scratch.data(), n.right.data(), out.data() + p * H2 * W2, H2, W, W2);
            }
            break;
        }
        case Op::SoftmaxCrossEntropy: {
            const Tensor& l = values_[n.in0];
            const std::size_t N = l.dim(0), K = l.dim(1);
            double total = 0.0;
            for (std::size_t s = 0; s < N; ++s) {
                const double* row = l.data() + s * K;
                double m = row[0];
                for (std::size_t k = 1; k < K; ++k) m = std::max(m, row[k]);
                double sum = 0.0;
                double* p = n.softmax.data() + s * K;
                for (std::size_t k = 0; k < K; ++k) {
                    p[k] = std::exp(row[k] - m);
                    sum += p[k];
                }
                for (std::size_t k = 0; k < K; ++k) p[k] /= sum;
                total += m + std::log(sum) - row[n.labels[s]];
            }
            out[0] = total / static_cast<double>(N);
            break;
        }
    }
}

void Graph::backward(int output) {
    std::vector<int> wanted;
    for (int id = 0; id < static_cast<int>(nodes_.size()); ++id)
        if (nodes_[id].op == Op::Input) wanted.push_back(id);
    backward(output, wanted);
}

void Graph::backward(int output, const std::vector<int>& wanted) {
    check_id(output);
    if (values_[output].numel() != 1)
        throw std::invalid_argument("backward: output node must be scalar, got shape " +
                                    shape_str(values_[output].shape()));
    if (adjoints_.size() != nodes_.size()) {
        adjoints_.clear();
        adjoints_.reserve(nodes_.size());
        for (const Tensor& v : values_) adjoints_.emplace_back(v.shape());
    }
    for (Tensor& a : adjoints_) a.fill(0.0);

    // A node needs an adjoint exactly when a wanted node can reach it.
    std::vector<char> active(nodes_.size(), 0);
    for (int w : wanted) {
        check_id(w);
        active[w] = 1;
    }
    for (int id = 0; id <= output; ++id) {
        if (active[id]) continue;
        const Node& n = nodes_[id];
        if ((n.in0 >= 0 && active[n.in0]) || (n.in1 >= 0 && active[n.in1])) active[id] = 1;
    }

    adjoints_[output][0] = 1.0;
    for (int id = output; id >= 0; --id)
        if (active[id]) backward_node(id, active);
}

void Graph::backward_node(int id, const std::vector<char>& active) {
    Node& n = nodes_[id];
    const Tensor& g = adjoints_[id];
    switch (n.op) {
        case Op::Input:
            break;
        case Op::Add: {
            for (int in : {n.in0, n.in1}) {
                if (!active[in]) continue;
                double* d = adjoints_[in].data();
                const double* gs = g.data();
                for (std::size_t i = 0; i < g.numel(); ++i) d[i] += gs[i];
            }
            break;
        }
        case Op::ScalarMul: {
            if (!active[n.in0]) break;
            double* d = adjoints_[n.in0].data();
            const double* gs = g.data();
            for (std::size_t i = 0; i < g.numel(); ++i) d[i] += n.scalar * gs[i];
            break;
        }
        case Op::Mul: {
            const double* a = values_[n.in0].data();
            const double* b = values_[n.in1].data();
            const double* gs = g.data();
            if (active[n.in0]) {
                double* d = adjoints_[n.in0].data();
                for (std::size_t i = 0; i < g.numel(); ++i) d[i] += gs[i] * b[i];
            }
            if (active[n.in1]) {
                double* d = adjoints_[n.in1].data();
                for (std::size_t i = 0; i < g.numel(); ++i) d[i] += gs[i] * a[i];
            }
            break;
        }
        case Op::MatMul: {
            const Tensor& a = values_[n.in0];
            const Tensor& b = values_[n.in1];
            const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
            if (active[n.in0]) {
                n.scratch.resize(N * K);
                transpose(b.data(), n.scratch.data(), K, N);
                sadv::matmul(g.data(), n.scratch.data(), adjoints_[n.in0].data(), M, N, K, true);
            }
            if (active[n.in1]) {
                n.scratch2.resize(K * M);
                transpose(a.data(), n.scratch2.data(), M, K);
                sadv::matmul(n.scratch2.data(), g.data(), adjoints_[n.in1].data(), K, M, N, true);
            }
            break;
        }
        case Op::Conv2d: {
            const Tensor& x = values_[n.in0];
            const Tensor& w = values_[n.in1];
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t F = w.dim(0), KH = w.dim(2), KW = w.dim(3);
            const std::size_t OH = values_[id].dim(2), OW = values_[id].dim(3);
            const std::size_t ckk = C * KH * KW, ohow = OH * OW;
            const int pad = n.pad;
            if (active[n.in1]) {
                // dW^T accumulated sample by sample as col * dOut^T, one
                // transpose of the [F,OH*OW] slab per sample instead of the
                // much larger im2col matrix.
                n.scratch.resize(ckk * ohow);
                n.scratch2.resize(ohow * F);
                n.scratch3.assign(ckk * F, 0.0);
                for (std::size_t s = 0; s < N; ++s) {
                    const double* xs = x.data() + s * C * H * W;
                    double* col = n.scratch.data();
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t kh = 0; kh < KH; ++kh)
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                double* row = col + ((c * KH + kh) * KW + kw) * ohow;
                                for (std::size_t oh = 0; oh < OH; ++oh) {
                                    long ih = static_cast<long>(oh + kh) - pad;
                                    if (ih < 0 || ih >= static_cast<long>(H)) {
                                        std::fill(row + oh * OW, row + (oh + 1) * OW, 0.0);
                                        continue;
                                    }
                                    const double* xrow = xs + (c * H + ih) * W;
                                    for (std::size_t ow = 0; ow < OW; ++ow) {
                                        long iw = static_cast<long>(ow + kw) - pad;
                                        row[oh * OW + ow] = (iw < 0 || iw >= static_cast<long>(W))
                                                                ? 0.0
                                                                : xrow[iw];
                                    }
                                }
                            }
                    transpose(g.data() + s * F * ohow, n.scratch2.data(), F, ohow);
                    sadv::matmul(col, n.scratch2.data(), n.scratch3.data(), ckk, ohow, F, true);
                }
                double* dw = adjoints_[n.in1].data();
                for (std::size_t q = 0; q < ckk; ++q)
                    for (std::size_t f = 0; f < F; ++f) dw[f * ckk + q] += n.scratch3[q * F + f];
            }
            if (active[n.in0]) {
                // dX per sample: col2im of W^T * dOut
                n.scratch.resize(ckk * ohow);
                n.scratch2.resize(ckk * F);
                transpose(w.data(), n.scratch2.data(), F, ckk);
                double* dx = adjoints_[n.in0].data();
                for (std::size_t s = 0; s < N; ++s) {
                    sadv::matmul(n.scratch2.data(), g.data() + s * F * ohow, n.scratch.data(), ckk, F,
                           ohow);
                    double* dxs = dx + s * C * H * W;
                    const double* gcol = n.scratch.data();
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t kh = 0; kh < KH; ++kh)
                            for (std::size_t kw = 0; kw < KW; ++kw) {
                                const double* row = gcol + ((c * KH + kh) * KW + kw) * ohow;
                                for (std::size_t oh = 0; oh < OH; ++oh) {
                                    long ih = static_cast<long>(oh + kh) - pad;
                                    if (ih < 0 || ih >= static_cast<long>(H)) continue;
                                    double* dxrow = dxs + (c * H + ih) * W;
                                    for (std::size_t ow = 0; ow < OW; ++ow) {
                                        long iw = static_cast<long>(ow + kw) - pad;
                                        if (iw < 0 || iw >= static_cast<long>(W)) continue;
                                        dxrow[iw] += row[oh * OW + ow];
                                    }
                                }
                            }
                }
            }
            break;
        }
        case Op::BiasAdd: {
            const Tensor& x = values_[n.in0];
            const std::size_t N = x.dim(0), C = x.dim(1);
            const std::size_t inner = x.numel() / (N * C);
            const double* gs = g.data();
            if (active[n.in0]) {
                double* d = adjoints_[n.in0].data();
                for (std::size_t i = 0; i < g.numel(); ++i) d[i] += gs[i];
            }
            if (active[n.in1]) {
                double* db = adjoints_[n.in1].data();
                for (std::size_t s = 0; s < N; ++s)
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::size_t base = (s * C + c) * inner;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < inner; ++i) acc += gs[base + i];
                        db[c] += acc;
                    }
            }
            break;
        }
        case Op::MaxPool2x2: {
            if (!active[n.in0]) break;
            double* d = adjoints_[n.in0].data();
            const double* gs = g.data();
            for (std::size_t i = 0; i < g.numel(); ++i) d[n.argmax[i]] += gs[i];
            break;
        }
        case Op::Relu: {
            if (!active[n.in0]) break;
            const double* a = values_[n.in0].data();
            double* d = adjoints_[n.in0].data();
            const double* gs = g.data();
            for (std::size_t i = 0; i < g.numel(); ++i)
                if (a[i] > 0.0) d[i] += gs[i];
            break;
        }
        case Op::Reshape: {
            if (!active[n.in0]) break;
            double* d = adjoints_[n.in0].data();
            const double* gs = g.data();
            for (std::size_t i = 0; i < g.numel(); ++i) d[i] += gs[i];
            break;
        }
        case Op::LinMap2d: {
            if (!active[n.in0]) break;
            const Tensor& x = values_[n.in0];
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t H2 = n.left.dim(0), W2 = n.right.dim(1);
            n.scratch.resize(H2 * W);
            n.scratch2.resize(H * W);
            double* d = adjoints_[n.in0].data();
            for (std::size_t p = 0; p < N * C; ++p) {
                sadv::matmul(g.data() + p * H2 * W2, n.right_t.data(), n.scratch.data(), H2, W2, W);
                sadv::matmul(n.left_t.data(), n.scratch.data(), n.scratch2.data(), H, H2, W);
                double* dxs = d + p * H * W;
                for (std::size_t i = 0; i < H * W; ++i) dxs[i] += n.scratch2[i];
            }
            break;
        }
        case Op::SoftmaxCrossEntropy: {
            if (!active[n.in0]) break;
            const std::size_t N = n.softmax.dim(0), K = n.softmax.dim(1);
            const double scale = g[0] / static_cast<double>(N);
            double* d = adjoints_[n.in0].data();
            const double* p = n.softmax.data();
            for (std::size_t s = 0; s < N; ++s) {
                for (std::size_t k = 0; k < K; ++k) d[s * K + k] += scale * p[s * K + k];
                d[s * K + n.labels[s]] -= scale;
            }
            break;
        }
    }
}

std::uint64_t Graph::activation_signature() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    for (const Node& n : nodes_) {
        if (n.op == Op::Relu) {
            const Tensor& x = values_[n.in0];
            for (std::size_t i = 0; i < x.numel(); ++i) mix(x[i] > 0.0 ? 1 : 0);
        } else if (n.op == Op::MaxPool2x2) {
            for (unsigned a : n.argmax) mix(a);
        }
    }
    return h;
}

double Graph::kink_margin() const {
    double margin = std::numeric_limits<double>::infinity();
    for (const Node& n : nodes_) {
        if (n.op == Op::Relu) {
            const Tensor& x = values_[n.in0];
            for (std::size_t i = 0; i < x.numel(); ++i) margin = std::min(margin, std::abs(x[i]));
        } else if (n.op == Op::MaxPool2x2) {
            const Tensor& x = values_[n.in0];
            const std::size_t H = x.dim(2), W = x.dim(3);
            for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p)
                for (std::size_t oh = 0; oh < H / 2; ++oh)
                    for (std::size_t ow = 0; ow < W / 2; ++ow) {
                        const std::size_t b = (p * H + 2 * oh) * W + 2 * ow;
                        double v[4] = {x[b], x[b + 1], x[b + W], x[b + W + 1]};
                        std::sort(v, v + 4);
                        margin = std::min(margin, v[3] - v[2]);
                    }
        }
    }
    return margin;
}

}  // namespace sadv
