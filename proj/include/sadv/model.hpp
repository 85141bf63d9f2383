#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sadv/graph.hpp"
#include "sadv/spectral.hpp"
#include "sadv/tensor.hpp"

namespace sadv {

/// Layer grammar for the architecture descriptor, a comma-separated list:
///   in:C:H:W        input planes and spatial size (required first)
///   range:LO:HI     valid pixel interval (required second)
///   conv:F:K:P      KxK convolution to F planes, zero padding P, plus bias
///   relu
///   pool2           2x2 max-pool
///   flatten
///   fc:U            dense layer to U units, plus bias
/// Example: in:1:28:28,range:0:1,conv:16:5:2,relu,pool2,conv:32:5:2,relu,
///          pool2,flatten,fc:128,relu,fc:10
struct LayerSpec {
    enum class Kind { Conv, Relu, Pool, Flatten, Fc } kind;
    std::size_t filters = 0;  // Conv
    std::size_t kernel = 0;   // Conv
    std::size_t pad = 0;      // Conv
    std::size_t units = 0;    // Fc
};

struct ModelSpec {
    std::string descriptor;
    std::size_t in_c = 0, in_h = 0, in_w = 0;
    double lo = 0.0, hi = 1.0;
    std::vector<LayerSpec> layers;
    std::size_t classes = 0;  // units of the final fc layer

    static ModelSpec parse(const std::string& descriptor);
};

struct Model {
    ModelSpec spec;
    /// Parameters in architecture order: conv1.weight, conv1.bias, ...,
    /// fc1.weight, fc1.bias, ...
    std::vector<std::pair<std::string, Tensor>> params;

    /// Seeded initialization: uniform He fan-in scaling for weights
    /// (limit sqrt(6/fan_in)), zero biases.
    static Model init(const std::string& descriptor, std::uint64_t seed);

    const Tensor& param(const std::string& name) const;
};

/// A model graph bound at a fixed batch size. `input` is the pixel batch for
/// pixel-domain graphs; for frequency-domain graphs it is the coefficient
/// batch z and the graph applies the inverse transform before the first
/// layer. Parameters live as input nodes and follow Model::params order.
struct BoundModel {
    Graph graph;
    int input = -1;
    int logits = -1;
    int loss = -1;
    std::vector<int> param_nodes;
    std::size_t batch = 0;
    bool frequency_domain = false;

    void set_batch(const Tensor& x, const std::vector<int>& labels);
    /// Copies current parameter values into the graph (after an update).
    void sync_params(const Model& m);
    /// Forward to the loss node; returns the mean batch loss.
    double forward_loss();
    /// Per-sample argmax prediction from the logits of the last forward.
    std::vector<int> predictions() const;
};

BoundModel bind_pixel(const Model& m, std::size_t batch);
BoundModel bind_frequency(const Model& m, std::size_t batch, const SpectralPlan& plan);

}  // namespace sadv
