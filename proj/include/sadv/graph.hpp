#pragma once

#include <cstdint>
#include <vector>

#include "sadv/tensor.hpp"

namespace sadv {

enum class Op {
    Input,
    Add,
    ScalarMul,
    Mul,
    MatMul,
    Conv2d,
    BiasAdd,
    MaxPool2x2,
    Relu,
    Reshape,
    LinMap2d,
    SoftmaxCrossEntropy,
};

const char* op_name(Op op);

/// Reverse-mode tape over dense tensors.
///
/// Nodes are appended in topological order, so a plain sweep evaluates the
/// graph and the reverse sweep accumulates adjoints. Output shapes are fixed
/// at build time; set_input rebinds values so the same graph can be re-run
/// (attack loops, training batches) without reallocation.
class Graph {
public:
    int input(Tensor value);
    int add(int a, int b);
    int scalar_mul(double s, int a);
    int mul(int a, int b);
    int matmul(int a, int b);
    /// x:[N,C,H,W] * w:[F,C,KH,KW], stride 1, zero padding `pad`,
    /// cross-correlation orientation (no kernel flip).
    int conv2d(int x, int w, int pad);
    /// x:[N,C,...] + bias:[C] broadcast along axis 1.
    int bias_add(int x, int bias);
    int maxpool2x2(int x);
    int relu(int x);
    int reshape(int x, Shape shape);
    /// y[n,c] = left * x[n,c] * right for fixed matrices; backward is the
    /// transpose chain rule, independent of any transform-specific code.
    int linmap2d(int x, Tensor left, Tensor right);
    /// logits:[N,K] with one class index per row; mean loss over the batch.
    int softmax_cross_entropy(int logits, std::vector<int> labels);

    void set_input(int id, const Tensor& value);
    void set_labels(int id, std::vector<int> labels);

    /// Evaluates every node up to and including `output`; returns its value.
    const Tensor& forward(int output);
    /// Adjoints of every node reachable backwards from `output` (scalar).
    void backward(int output);
    /// Adjoints restricted to paths between `wanted` nodes and `output`;
    /// gradients of everything else are skipped (and left zero).
    void backward(int output, const std::vector<int>& wanted);

    const Tensor& value(int id) const;
    const Tensor& adjoint(int id) const;
    std::size_t size() const { return nodes_.size(); }

    /// Smallest |ReLU pre-activation| and smallest max-pool top-two gap seen
    /// in the last forward pass. Finite-difference checks use this to stay
    /// clear of kinks.
    double kink_margin() const;

    /// Hash of the piecewise-linear region of the last forward pass: ReLU
    /// sign bits and max-pool winners. Two evaluations in the same region
    /// are joined by a smooth path, so difference quotients between them
    /// are trustworthy.
    std::uint64_t activation_signature() const;

private:
    struct Node {
        Op op;
        int in0 = -1;
        int in1 = -1;
        double scalar = 0.0;
        int pad = 0;
        Tensor left, right;           // LinMap2d matrices
        Tensor left_t, right_t;       // their transposes, built once
        std::vector<int> labels;      // SoftmaxCrossEntropy
        std::vector<double> scratch;   // im2col buffers, transposes
        std::vector<double> scratch2;
        std::vector<double> scratch3;  // conv weight-gradient accumulator
        std::vector<unsigned> argmax;  // max-pool winners
        Tensor softmax;                // cached probabilities
    };

    int push(Node node, Shape out_shape);
    const Node& at(int id) const;
    void check_id(int id) const;
    void forward_node(int id);
    void backward_node(int id, const std::vector<char>& active);

    std::vector<Node> nodes_;
    std::vector<Tensor> values_;
    std::vector<Tensor> adjoints_;
};

}  // namespace sadv
