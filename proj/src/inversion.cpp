#include "invercl/inversion.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "invercl/adam.hpp"

namespace invercl {

double gaussian_kl(const std::vector<double>& mu1, const std::vector<double>& std1,
                   const std::vector<double>& mu2, const std::vector<double>& std2) {
    const std::size_t d = mu1.size();
    if (std1.size() != d || mu2.size() != d || std2.size() != d)
        throw std::invalid_argument("gaussian_kl: length mismatch");
    double kl = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        if (std1[j] <= 0.0 || std2[j] <= 0.0)
            throw std::domain_error("gaussian_kl: non-positive std");
        const double dm = mu1[j] - mu2[j];
        kl += std::log(std2[j] / std1[j]) +
              (std1[j] * std1[j] + dm * dm) / (2.0 * std2[j] * std2[j]) - 0.5;
    }
    return kl;
}

double total_variation(const Tensor& x, Tensor* grad) {
    if (grad) *grad = Tensor(x.shape, 0.0);
    if (x.grid_rows == 0 || x.grid_cols == 0) return 0.0;
    const std::size_t n = x.rows();
    const std::size_t h = x.grid_rows;
    const std::size_t w = x.grid_cols;
    if (h * w != x.cols()) throw std::invalid_argument("total_variation: grid does not match dim");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.row_ptr(i);
        double* grow = grad ? grad->row_ptr(i) : nullptr;
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const std::size_t idx = r * w + c;
                if (c + 1 < w) {
                    const double dv = row[idx + 1] - row[idx];
                    total += dv * dv;
                    if (grow) {
                        grow[idx + 1] += 2.0 * dv / static_cast<double>(n);
                        grow[idx] -= 2.0 * dv / static_cast<double>(n);
                    }
                }
                if (r + 1 < h) {
                    const double dv = row[idx + w] - row[idx];
                    total += dv * dv;
                    if (grow) {
                        grow[idx + w] += 2.0 * dv / static_cast<double>(n);
                        grow[idx] -= 2.0 * dv / static_cast<double>(n);
                    }
                }
            }
    }
    return total / static_cast<double>(n);
}

namespace {

// KL(batch stats of X || stored stats) plus its gradient accumulated into
// grad (scaled by `weight`). Flooring clamps the std gradient to zero.
double batch_kl_term(const Tensor& x, const LayerStats& stored, double weight, Tensor* grad) {
    if (x.rows() < 2) throw std::invalid_argument("inversion objective: batch must be >= 2");
    if (stored.empty())
        throw std::runtime_error("inversion objective: missing stored statistics");
    if (stored.dim() != x.cols())
        throw std::invalid_argument("inversion objective: stats dimension mismatch");
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    std::vector<double> mu(d, 0.0), raw(d, 0.0), sd(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mu[j] += x.at(i, j);
    for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = x.at(i, j) - mu[j];
            raw[j] += dv * dv;
        }
    for (std::size_t j = 0; j < d; ++j) {
        raw[j] = std::sqrt(raw[j] / static_cast<double>(n));
        sd[j] = std::max(kStdFloor, raw[j]);
    }
    const double kl = gaussian_kl(mu, sd, stored.mean, stored.std);
    if (grad && weight != 0.0) {
        for (std::size_t j = 0; j < d; ++j) {
            const double s2 = stored.std[j] * stored.std[j];
            const double dmu = (mu[j] - stored.mean[j]) / s2;
            const double dsd = (raw[j] > kStdFloor) ? (-1.0 / sd[j] + sd[j] / s2) : 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double g = dmu / static_cast<double>(n);
                if (dsd != 0.0)
                    g += dsd * (x.at(i, j) - mu[j]) / (static_cast<double>(n) * raw[j]);
                grad->at(i, j) += weight * g;
            }
        }
    }
    return kl;
}

}  // namespace

LayerObjectiveResult layer_inversion_objective(const LayerUnit& layer, const Tensor& candidate,
                                               const Tensor& target, const LayerStats& stats,
                                               double alpha, double beta) {
    if (candidate.rows() != target.rows())
        throw std::invalid_argument("layer_inversion_objective: batch size mismatch");
    LayerObjectiveResult res;
    res.grad = Tensor(candidate.shape, 0.0);
    res.kl = batch_kl_term(candidate, stats, alpha, &res.grad);

    Tensor pre;
    Tensor out = layer_forward(layer, candidate, &pre);
    const std::size_t n = out.rows();
    const std::size_t d = out.cols();
    if (target.cols() != d)
        throw std::invalid_argument("layer_inversion_objective: target dim mismatch");
    double mse = 0.0;
    Tensor gout = Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = out.at(i, j) - target.at(i, j);
            mse += dv * dv;
            gout.at(i, j) = 2.0 * dv / (static_cast<double>(n) * static_cast<double>(d));
        }
    res.match = mse / (static_cast<double>(n) * static_cast<double>(d));
    if (beta != 0.0) {
        Tensor gin = layer_backprop_input(layer, pre, gout);
        for (std::size_t i = 0; i < gin.numel(); ++i) res.grad.data[i] += beta * gin.data[i];
    }
    res.loss = alpha * res.kl + beta * res.match;
    return res;
}

LayerObjectiveResult top_layer_objective(const ClassificationHead& head, const Tensor& candidate,
                                         int label, const LayerStats& stats, double alpha,
                                         double beta) {
    LayerObjectiveResult res;
    res.grad = Tensor(candidate.shape, 0.0);
    res.kl = batch_kl_term(candidate, stats, alpha, &res.grad);
    Tensor logits = head_logits(head, candidate);
    std::vector<int> labels(candidate.rows(), label);
    Tensor glogits;
    res.match = cross_entropy(logits, labels, 0, head.num_classes(), &glogits);
    if (beta != 0.0) {
        Tensor gfeat = head_backprop_feature(head, candidate, glogits);
        for (std::size_t i = 0; i < gfeat.numel(); ++i) res.grad.data[i] += beta * gfeat.data[i];
    }
    res.loss = alpha * res.kl + beta * res.match;
    return res;
}

namespace {

Tensor init_from_stats(const LayerStats& stats, std::size_t batch, Rng& rng) {
    if (stats.empty()) throw std::runtime_error("invert_layer: missing layer statistics");
    Tensor x = Tensor::matrix(batch, stats.dim());
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < stats.dim(); ++j)
            x.at(i, j) = rng.normal(stats.mean[j], stats.std[j]);
    return x;
}

}  // namespace

Tensor invert_layer(const LayerUnit& layer, const Tensor& target, const LayerStats& stats,
                    double alpha, double beta, std::size_t steps, double lr, Rng& rng,
                    InversionTrace* trace, const std::string& phase) {
    if (steps < 1) throw std::invalid_argument("invert_layer: steps must be >= 1");
    Tensor x = init_from_stats(stats, target.rows(), rng);
    AdamState st(x.numel(), lr);
    for (std::size_t s = 0; s < steps; ++s) {
        LayerObjectiveResult r = layer_inversion_objective(layer, x, target, stats, alpha, beta);
        adam_step(x.data, r.grad.data, st);
        if (trace)
            trace->add({phase, s, r.loss, alpha * r.kl, beta * r.match, 0.0});
    }
    return x;
}

Tensor run_pmi(const Network& net, const InversionTarget& target, const InversionWeights& w,
               std::size_t steps_per_layer, double lr, Rng& rng, std::size_t batch_size,
               InversionTrace* trace, std::size_t entry_layer) {
    const std::size_t L = net.num_layers();
    if (steps_per_layer < 1) throw std::invalid_argument("run_pmi: steps_per_layer must be >= 1");
    if (entry_layer >= L) throw std::invalid_argument("run_pmi: entry_layer out of range");
    if (w.alpha.size() != L + 1 || w.beta.size() != L + 1)
        throw std::invalid_argument("run_pmi: weights length must be L+1");

    Tensor cur_target;
    if (target.kind == InversionTarget::Kind::feature_vector) {
        if (target.features.cols() != net.feature_dim())
            throw std::invalid_argument("run_pmi: target feature dim mismatch");
        cur_target = target.features;
    } else {
        // Optimize o_L itself against the prior + CE objective first.
        Tensor x = init_from_stats(net.stats[L], batch_size, rng);
        AdamState st(x.numel(), lr);
        for (std::size_t s = 0; s < steps_per_layer; ++s) {
            LayerObjectiveResult r = top_layer_objective(net.head, x, target.label, net.stats[L],
                                                         w.alpha[L], w.beta[L]);
            adam_step(x.data, r.grad.data, st);
            if (trace) trace->add({"pmi-top", s, r.loss, w.alpha[L] * r.kl, w.beta[L] * r.match, 0.0});
        }
        cur_target = std::move(x);
    }

    for (std::size_t l = L; l > entry_layer; --l) {
        // Candidate lives at the input of layer unit l (stats index l-1);
        // alpha index l-1 weights the KL on o_{l-1}.
        cur_target = invert_layer(net.layers[l - 1], cur_target, net.stats[l - 1], w.alpha[l - 1],
                                  w.beta[l - 1], steps_per_layer, lr, rng, trace,
                                  "pmi-layer-" + std::to_string(l));
    }
    return cur_target;
}

FullObjectiveResult full_inversion_objective(const Network& net, const Tensor& x,
                                             const InversionTarget& target,
                                             const InversionWeights& w, std::size_t entry_layer) {
    const std::size_t L = net.num_layers();
    if (w.alpha.size() != L + 1 || w.beta.size() != L + 1)
        throw std::invalid_argument("full_inversion_objective: weights length must be L+1");
    if (x.rows() < 2)
        throw std::invalid_argument("full_inversion_objective: batch must be >= 2");
    FullObjectiveResult res;
    ForwardCache cache = forward_collect(net, x, entry_layer);
    const std::size_t span = cache.preacts.size();  // layers entry+1..L

    // Gradient w.r.t. each cached output, filled top-down.
    std::vector<Tensor> grads(span + 1);
    for (std::size_t k = 0; k <= span; ++k) grads[k] = Tensor(cache.outputs[k].shape, 0.0);

    // Prior KL terms on o_entry .. o_L (alpha index = absolute layer output).
    for (std::size_t k = 0; k <= span; ++k) {
        const std::size_t abs_l = entry_layer + k;
        const double a = w.alpha[abs_l];
        if (a == 0.0) continue;
        res.kl += a * batch_kl_term(cache.outputs[k], net.stats[abs_l], a, &grads[k]);
    }

    // Top output-match term with weight beta[L].
    const double b = w.beta[L];
    const Tensor& feat = cache.outputs[span];
    if (target.kind == InversionTarget::Kind::feature_vector) {
        if (target.features.rows() != feat.rows() || target.features.cols() != feat.cols())
            throw std::invalid_argument("full_inversion_objective: target feature shape mismatch");
        double mse = 0.0;
        const std::size_t n = feat.rows(), d = feat.cols();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double dv = feat.at(i, j) - target.features.at(i, j);
                mse += dv * dv;
                grads[span].at(i, j) +=
                    b * 2.0 * dv / (static_cast<double>(n) * static_cast<double>(d));
            }
        res.match = b * mse / (static_cast<double>(feat.rows()) * static_cast<double>(d));
    } else {
        std::vector<int> labels(feat.rows(), target.label);
        Tensor glogits;
        const double ce = cross_entropy(cache.logits, labels, 0, net.head.num_classes(),
                                        b != 0.0 ? &glogits : nullptr);
        res.match = b * ce;
        if (b != 0.0) {
            Tensor gfeat = head_backprop_feature(net.head, feat, glogits);
            for (std::size_t i = 0; i < gfeat.numel(); ++i)
                grads[span].data[i] += b * gfeat.data[i];
        }
    }

    // Reverse sweep accumulating the per-output KL gradients.
    Tensor g = grads[span];
    for (std::size_t k = span; k > 0; --k) {
        g = layer_backprop_input(net.layers[entry_layer + k - 1], cache.preacts[k - 1], g);
        for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += grads[k - 1].data[i];
    }
    res.grad = std::move(g);

    if (w.gamma != 0.0) {
        Tensor tv_grad;
        const double tv = total_variation(x, &tv_grad);
        res.tv = w.gamma * tv;
        for (std::size_t i = 0; i < res.grad.numel(); ++i)
            res.grad.data[i] += w.gamma * tv_grad.data[i];
    }

    res.loss = res.kl + res.match + res.tv;
    return res;
}

Tensor finetune_full(const Network& net, const Tensor& x_init, const InversionTarget& target,
                     const InversionWeights& w, std::size_t steps, double lr,
                     InversionTrace* trace, std::size_t entry_layer) {
    Tensor x = x_init;
    if (steps == 0) return x;
    AdamState st(x.numel(), lr);
    for (std::size_t s = 0; s < steps; ++s) {
        FullObjectiveResult r = full_inversion_objective(net, x, target, w, entry_layer);
        adam_step(x.data, r.grad.data, st);
        if (trace) trace->add({"full", s, r.loss, r.kl, r.match, r.tv});
    }
    return x;
}

void write_trace_csv(const InversionTrace& trace, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open trace file " + path);
    f << "phase,step,total_loss,kl_loss,match_loss,tv_loss\n";
    f.precision(17);
    for (const auto& r : trace.records)
        f << r.phase << ',' << r.step << ',' << r.total_loss << ',' << r.kl_loss << ','
          << r.match_loss << ',' << r.tv_loss << '\n';
}

}  // namespace invercl
