#include "invercl/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace invercl {

double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::none: return z;
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::leaky_relu: return z > 0.0 ? z : 0.01 * z;
        case Activation::tanh_fn: return std::tanh(z);
    }
    return z;
}

double activation_grad(Activation a, double z) {
    switch (a) {
        case Activation::none: return 1.0;
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::leaky_relu: return z > 0.0 ? 1.0 : 0.01;
        case Activation::tanh_fn: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

Network make_mlp(const std::vector<std::size_t>& dims, Activation act,
                 std::size_t num_classes, HeadMode head_mode, Rng& rng, double head_tau) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and one layer");
    Network net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        LayerUnit unit;
        unit.weight = Tensor::matrix(dims[l + 1], dims[l]);
        unit.bias = Tensor({dims[l + 1]}, 0.0);
        const double scale = std::sqrt(2.0 / static_cast<double>(dims[l] + dims[l + 1]));
        for (double& w : unit.weight.data) w = rng.normal(0.0, scale);
        unit.activation = act;
        net.layers.push_back(std::move(unit));
    }
    const std::size_t feat = dims.back();
    net.head.mode = head_mode;
    net.head.tau = head_tau;
    if (head_mode == HeadMode::linear) {
        net.head.weight = Tensor::matrix(num_classes, feat);
        net.head.bias = Tensor({num_classes}, 0.0);
        const double scale = std::sqrt(2.0 / static_cast<double>(feat + num_classes));
        for (double& w : net.head.weight.data) w = rng.normal(0.0, scale);
    } else {
        net.head.anchors = Tensor::matrix(num_classes, feat);
        for (std::size_t c = 0; c < num_classes; ++c) {
            std::vector<double> a(feat);
            for (double& v : a) v = rng.normal();
            a = normalized(a);
            for (std::size_t j = 0; j < feat; ++j) net.head.anchors.at(c, j) = a[j];
        }
    }
    net.stats.resize(net.layers.size() + 1);
    return net;
}

Tensor layer_forward(const LayerUnit& layer, const Tensor& x, Tensor* preact_out) {
    const std::size_t n = x.rows();
    if (x.cols() != layer.in_dim())
        throw std::invalid_argument("layer_forward: input dim " + std::to_string(x.cols()) +
                                    " does not match layer in_dim " +
                                    std::to_string(layer.in_dim()));
    Tensor z = Tensor::matrix(n, layer.out_dim());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            double s = layer.bias.data[o];
            const double* wr = layer.weight.row_ptr(o);
            const double* xr = x.row_ptr(i);
            for (std::size_t j = 0; j < layer.in_dim(); ++j) s += wr[j] * xr[j];
            z.at(i, o) = s;
        }
    Tensor out = z;
    for (double& v : out.data) v = apply_activation(layer.activation, v);
    if (preact_out) *preact_out = std::move(z);
    return out;
}

Tensor head_logits(const ClassificationHead& head, const Tensor& features) {
    const std::size_t n = features.rows();
    const std::size_t k = head.num_classes();
    Tensor logits = Tensor::matrix(n, k);
    if (head.mode == HeadMode::linear) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < k; ++c) {
                double s = head.bias.data[c];
                const double* wr = head.weight.row_ptr(c);
                const double* fr = features.row_ptr(i);
                for (std::size_t j = 0; j < head.feat_dim(); ++j) s += wr[j] * fr[j];
                logits.at(i, c) = s;
            }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double> f = tensor_row(features, i);
            for (std::size_t c = 0; c < k; ++c)
                logits.at(i, c) = head.tau * cosine(f, tensor_row(head.anchors, c));
        }
    }
    return logits;
}

ForwardCache forward_collect(const Network& net, const Tensor& x, std::size_t entry_layer) {
    if (x.rows() < 1) throw std::invalid_argument("forward_collect: empty batch");
    if (entry_layer >= net.num_layers())
        throw std::invalid_argument("forward_collect: entry_layer out of range");
    if (x.cols() != net.layers[entry_layer].in_dim())
        throw std::invalid_argument("forward_collect: input dim mismatch at layer " +
                                    std::to_string(entry_layer));
    ForwardCache cache;
    cache.outputs.push_back(x);
    Tensor cur = x;
    for (std::size_t l = entry_layer; l < net.num_layers(); ++l) {
        Tensor pre;
        cur = layer_forward(net.layers[l], cur, &pre);
        cache.preacts.push_back(std::move(pre));
        cache.outputs.push_back(cur);
    }
    cache.logits = head_logits(net.head, cur);
    return cache;
}

Tensor layer_backprop_input(const LayerUnit& layer, const Tensor& preact, const Tensor& upstream) {
    const std::size_t n = upstream.rows();
    if (upstream.cols() != layer.out_dim() || preact.cols() != layer.out_dim())
        throw std::invalid_argument("layer_backprop_input: shape mismatch");
    Tensor grad = Tensor::matrix(n, layer.in_dim());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            const double delta =
                upstream.at(i, o) * activation_grad(layer.activation, preact.at(i, o));
            if (delta == 0.0) continue;
            const double* wr = layer.weight.row_ptr(o);
            double* gr = grad.row_ptr(i);
            for (std::size_t j = 0; j < layer.in_dim(); ++j) gr[j] += delta * wr[j];
        }
    return grad;
}

Tensor backprop_to_input(const Network& net, const ForwardCache& cache,
                         const Tensor& grad_at_feature, std::size_t entry_layer) {
    Tensor g = grad_at_feature;
    const std::size_t span = cache.preacts.size();
    for (std::size_t k = span; k > 0; --k) {
        const std::size_t l = entry_layer + k - 1;
        g = layer_backprop_input(net.layers[l], cache.preacts[k - 1], g);
    }
    return g;
}

Tensor head_backprop_feature(const ClassificationHead& head, const Tensor& features,
                             const Tensor& grad_at_logits) {
    const std::size_t n = features.rows();
    const std::size_t d = head.feat_dim();
    const std::size_t k = head.num_classes();
    Tensor grad = Tensor::matrix(n, d);
    if (head.mode == HeadMode::linear) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < k; ++c) {
                const double g = grad_at_logits.at(i, c);
                if (g == 0.0) continue;
                const double* wr = head.weight.row_ptr(c);
                for (std::size_t j = 0; j < d; ++j) grad.at(i, j) += g * wr[j];
            }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double> f = tensor_row(features, i);
            const double nf = norm2(f);
            for (std::size_t c = 0; c < k; ++c) {
                const double g = grad_at_logits.at(i, c);
                if (g == 0.0) continue;
                const std::vector<double> a = tensor_row(head.anchors, c);
                const double na = norm2(a);
                const double cs = dot(a, f) / (na * nf);
                for (std::size_t j = 0; j < d; ++j)
                    grad.at(i, j) += g * head.tau * (a[j] / (na * nf) - cs * f[j] / (nf * nf));
            }
        }
    }
    return grad;
}

ParamGrads zero_param_grads(const Network& net) {
    ParamGrads g;
    for (const auto& layer : net.layers) {
        g.weight.push_back(Tensor(layer.weight.shape, 0.0));
        g.bias.push_back(Tensor(layer.bias.shape, 0.0));
    }
    if (net.head.mode == HeadMode::linear) {
        g.head_weight = Tensor(net.head.weight.shape, 0.0);
        g.head_bias = Tensor(net.head.bias.shape, 0.0);
    } else {
        g.head_weight = Tensor(net.head.anchors.shape, 0.0);
    }
    return g;
}

namespace {

void backbone_param_grads(const Network& net, const ForwardCache& cache, Tensor g,
                          ParamGrads& grads) {
    for (std::size_t l = net.num_layers(); l > 0; --l) {
        const LayerUnit& layer = net.layers[l - 1];
        const Tensor& pre = cache.preacts[l - 1];
        const Tensor& in = cache.outputs[l - 1];
        const std::size_t n = g.rows();
        Tensor next = Tensor::matrix(n, layer.in_dim());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const double delta = g.at(i, o) * activation_grad(layer.activation, pre.at(i, o));
                if (delta == 0.0) continue;
                grads.bias[l - 1].data[o] += delta;
                double* wg = grads.weight[l - 1].row_ptr(o);
                const double* xr = in.row_ptr(i);
                const double* wr = layer.weight.row_ptr(o);
                double* nr = next.row_ptr(i);
                for (std::size_t j = 0; j < layer.in_dim(); ++j) {
                    wg[j] += delta * xr[j];
                    nr[j] += delta * wr[j];
                }
            }
        g = std::move(next);
    }
}

void head_param_grads(const Network& net, const Tensor& features, const Tensor& grad_at_logits,
                      ParamGrads& grads) {
    const std::size_t n = features.rows();
    const std::size_t d = net.head.feat_dim();
    const std::size_t k = net.head.num_classes();
    if (net.head.mode == HeadMode::linear) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < k; ++c) {
                const double g = grad_at_logits.at(i, c);
                if (g == 0.0) continue;
                grads.head_bias.data[c] += g;
                const double* fr = features.row_ptr(i);
                double* wg = grads.head_weight.row_ptr(c);
                for (std::size_t j = 0; j < d; ++j) wg[j] += g * fr[j];
            }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double> f = tensor_row(features, i);
            const double nf = norm2(f);
            for (std::size_t c = 0; c < k; ++c) {
                const double g = grad_at_logits.at(i, c);
                if (g == 0.0) continue;
                const std::vector<double> a = tensor_row(net.head.anchors, c);
                const double na = norm2(a);
                const double cs = dot(a, f) / (na * nf);
                double* ag = grads.head_weight.row_ptr(c);
                for (std::size_t j = 0; j < d; ++j)
                    ag[j] += g * net.head.tau * (f[j] / (na * nf) - cs * a[j] / (na * na));
            }
        }
    }
}

}  // namespace

void accumulate_param_grads(const Network& net, const ForwardCache& cache,
                            const Tensor& grad_at_logits, ParamGrads& grads, bool head_only) {
    const Tensor& features = cache.outputs.back();
    head_param_grads(net, features, grad_at_logits, grads);
    if (!head_only) {
        Tensor gf = head_backprop_feature(net.head, features, grad_at_logits);
        backbone_param_grads(net, cache, std::move(gf), grads);
    }
}

void accumulate_param_grads_from_feature(const Network& net, const ForwardCache& cache,
                                         const Tensor& grad_at_feature, ParamGrads& grads) {
    backbone_param_grads(net, cache, grad_at_feature, grads);
}

void update_layer_stats(Network& net, const Tensor& batch) {
    if (batch.rows() < 2)
        throw std::invalid_argument("update_layer_stats: need at least 2 samples");
    ForwardCache cache = forward_collect(net, batch);
    for (std::size_t l = 0; l <= net.num_layers(); ++l)
        merge_stats(net.stats[l], batch_stats(cache.outputs[l]));
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels, std::size_t class_lo,
                     std::size_t class_hi, Tensor* grad) {
    const std::size_t n = logits.rows();
    if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count mismatch");
    if (class_hi > logits.cols() || class_lo >= class_hi)
        throw std::invalid_argument("cross_entropy: bad class range");
    if (grad) *grad = Tensor(logits.shape, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < static_cast<int>(class_lo) || y >= static_cast<int>(class_hi))
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) +
                                    " outside class range");
        double mx = logits.at(i, class_lo);
        for (std::size_t c = class_lo; c < class_hi; ++c) mx = std::max(mx, logits.at(i, c));
        double z = 0.0;
        for (std::size_t c = class_lo; c < class_hi; ++c) z += std::exp(logits.at(i, c) - mx);
        total += -(logits.at(i, y) - mx) + std::log(z);
        if (grad) {
            for (std::size_t c = class_lo; c < class_hi; ++c) {
                const double p = std::exp(logits.at(i, c) - mx) / z;
                grad->at(i, c) = (p - (static_cast<int>(c) == y ? 1.0 : 0.0)) /
                                 static_cast<double>(n);
            }
        }
    }
    return total / static_cast<double>(n);
}

}  // namespace invercl
