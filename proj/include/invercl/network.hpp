#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "invercl/rng.hpp"
#include "invercl/stats.hpp"
#include "invercl/tensor.hpp"

namespace invercl {

enum class Activation { none, relu, leaky_relu, tanh_fn };

double apply_activation(Activation a, double z);
// Derivative evaluated at the pre-activation; relu uses subgradient 0 at 0.
double activation_grad(Activation a, double z);

// One inversion "layer": a dense map plus its following activation.
struct LayerUnit {
    Tensor weight;  // (out_dim, in_dim)
    Tensor bias;    // (out_dim)
    Activation activation = Activation::none;

    std::size_t in_dim() const { return weight.shape[1]; }
    std::size_t out_dim() const { return weight.shape[0]; }
};

enum class HeadMode { linear, anchor };

struct ClassificationHead {
    HeadMode mode = HeadMode::linear;
    // linear mode
    Tensor weight;  // (num_classes, feat_dim)
    Tensor bias;    // (num_classes)
    // anchor mode: unit row vectors, cosine logits scaled by tau
    Tensor anchors;  // (num_classes, feat_dim)
    double tau = 10.0;

    std::size_t num_classes() const {
        return mode == HeadMode::linear ? weight.shape[0] : anchors.shape[0];
    }
    std::size_t feat_dim() const {
        return mode == HeadMode::linear ? weight.shape[1] : anchors.shape[1];
    }
};

// Forward cache: o[0] = x, o[l] = output of layer unit l, plus the
// pre-activations needed for the backward sweep.
struct ForwardCache {
    std::vector<Tensor> outputs;  // size L+1, outputs[0] = input
    std::vector<Tensor> preacts;  // size L
    Tensor logits;
};

struct Network {
    std::vector<LayerUnit> layers;
    ClassificationHead head;
    // stats[l] describes the input of layer unit l+1 for l < L; stats[L]
    // describes the backbone output o_L.
    std::vector<LayerStats> stats;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t feature_dim() const { return layers.back().out_dim(); }
};

// Builders ------------------------------------------------------------------

Network make_mlp(const std::vector<std::size_t>& dims, Activation act,
                 std::size_t num_classes, HeadMode head_mode, Rng& rng,
                 double head_tau = 10.0);

// Forward / backward --------------------------------------------------------

// Forward through the backbone only, from layer unit `entry+1` onward.
// Returns cached intermediates; logits computed by the head from o_L.
ForwardCache forward_collect(const Network& net, const Tensor& x, std::size_t entry_layer = 0);

Tensor head_logits(const ClassificationHead& head, const Tensor& features);

// Forward a single layer unit.
Tensor layer_forward(const LayerUnit& layer, const Tensor& x, Tensor* preact_out = nullptr);

// Backprop an upstream gradient at a layer-unit output down to that
// layer's input. `preact` is the cached pre-activation of the layer.
Tensor layer_backprop_input(const LayerUnit& layer, const Tensor& preact, const Tensor& upstream);

// Backprop a gradient at o_L (and/or at the logits) down to the input of
// layer unit entry+1. grad_at_feature may be empty when grad_at_logits is
// given and vice versa; both are accumulated when present.
Tensor backprop_to_input(const Network& net, const ForwardCache& cache,
                         const Tensor& grad_at_feature, std::size_t entry_layer = 0);

// Parameter gradients for the whole backbone plus head, given upstream
// gradients at the backbone output and/or at the logits.
struct ParamGrads {
    std::vector<Tensor> weight;  // per layer unit
    std::vector<Tensor> bias;
    Tensor head_weight;  // linear: dL/dW_head; anchor: dL/danchors
    Tensor head_bias;
};

ParamGrads zero_param_grads(const Network& net);

// Accumulates backbone + head gradients into `grads`.
// grad_at_logits: (N, classes) upstream gradient at the logits.
// If backbone_only is set, head parameters still receive their gradient but
// nothing flows into the backbone (used by head-only loss terms the other
// way around: see clharness).
void accumulate_param_grads(const Network& net, const ForwardCache& cache,
                            const Tensor& grad_at_logits, ParamGrads& grads,
                            bool head_only = false);

// Same entry point for losses defined directly on the backbone feature.
void accumulate_param_grads_from_feature(const Network& net, const ForwardCache& cache,
                                         const Tensor& grad_at_feature, ParamGrads& grads);

// Gradient of the logits w.r.t. the backbone feature, applied to an
// upstream logit gradient: returns (N, feat_dim).
Tensor head_backprop_feature(const ClassificationHead& head, const Tensor& features,
                             const Tensor& grad_at_logits);

// Layer statistics ----------------------------------------------------------

// Merges per-layer input statistics of `batch` (and the backbone output)
// into net.stats. Rejects batches with fewer than 2 samples.
void update_layer_stats(Network& net, const Tensor& batch);

// Losses on logits ----------------------------------------------------------

// Mean cross-entropy over rows; optionally restricted to a contiguous
// class range [class_lo, class_hi). Returns loss; fills grad (N, classes)
// with d(mean CE)/d logits when grad != nullptr.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     std::size_t class_lo, std::size_t class_hi, Tensor* grad);

}  // namespace invercl
