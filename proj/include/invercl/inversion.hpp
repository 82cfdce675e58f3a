#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "invercl/network.hpp"
#include "invercl/rng.hpp"
#include "invercl/tensor.hpp"

namespace invercl {

// Per-term scaling factors of the layer-wise and full inversion objectives.
// alpha[l] weights the prior KL on o_l (alpha[0] = input, alpha[L] = o_L);
// beta[l] weights the output-match term of layer unit l+1 during PMI, with
// beta[L] weighting the top-level CE/MSE term. gamma weights total variation.
struct InversionWeights {
    std::vector<double> alpha;
    std::vector<double> beta;
    double gamma = 0.0;

    static InversionWeights uniform(std::size_t num_layers, double a, double b, double g = 0.0) {
        InversionWeights w;
        w.alpha.assign(num_layers + 1, a);
        w.beta.assign(num_layers + 1, b);
        w.gamma = g;
        return w;
    }
};

struct InversionTarget {
    enum class Kind { class_label, feature_vector };
    Kind kind = Kind::feature_vector;
    int label = -1;
    Tensor features;  // (N, feat_dim) when kind == feature_vector

    static InversionTarget for_label(int y) {
        InversionTarget t;
        t.kind = Kind::class_label;
        t.label = y;
        return t;
    }
    static InversionTarget for_features(Tensor f) {
        InversionTarget t;
        t.kind = Kind::feature_vector;
        t.features = std::move(f);
        return t;
    }
};

struct TraceRecord {
    std::string phase;  // "pmi-layer-<l>" or "full"
    std::size_t step = 0;
    double total_loss = 0.0;
    double kl_loss = 0.0;
    double match_loss = 0.0;
    double tv_loss = 0.0;
};

struct InversionTrace {
    std::vector<TraceRecord> records;
    void add(TraceRecord r) { records.push_back(std::move(r)); }
};

void write_trace_csv(const InversionTrace& trace, const std::string& path);

// Closed-form KL between diagonal Gaussians N(mu1, std1) and N(mu2, std2),
// summed over dimensions. Throws on non-positive std entries.
double gaussian_kl(const std::vector<double>& mu1, const std::vector<double>& std1,
                   const std::vector<double>& mu2, const std::vector<double>& std2);

// Sum of squared horizontal+vertical neighbor differences over the sample's
// 2D grid annotation, averaged over the batch. Non-grid inputs give 0.
// Fills grad (same shape as x) with the derivative when grad != nullptr.
double total_variation(const Tensor& x, Tensor* grad = nullptr);

// Loss and gradient of the per-layer objective on a candidate batch:
//   alpha * KL(batch stats || stored stats) + beta * mean_i ||layer(x_i) - t_i||^2 / dim.
struct LayerObjectiveResult {
    double loss = 0.0;
    double kl = 0.0;
    double match = 0.0;
    Tensor grad;  // w.r.t. the candidate batch
};

LayerObjectiveResult layer_inversion_objective(const LayerUnit& layer, const Tensor& candidate,
                                               const Tensor& target, const LayerStats& stats,
                                               double alpha, double beta);

// Top-level variant used when inverting from a class label: candidate is a
// batch of o_L, objective = alpha*KL(stats of o_L) + beta*CE(head(o_L), y).
LayerObjectiveResult top_layer_objective(const ClassificationHead& head, const Tensor& candidate,
                                         int label, const LayerStats& stats, double alpha,
                                         double beta);

// Adaptive-moment minimization of layer_inversion_objective; the candidate
// is initialized from N(stored mean, stored std). Appends per-step records
// to `trace` when given.
Tensor invert_layer(const LayerUnit& layer, const Tensor& target, const LayerStats& stats,
                    double alpha, double beta, std::size_t steps, double lr, Rng& rng,
                    InversionTrace* trace = nullptr, const std::string& phase = "pmi-layer");

// Per-layer model inversion: top-down over layer units L..entry_layer+1,
// each stage's result becoming the next stage's target. Returns the batch
// at the input of layer unit entry_layer+1.
Tensor run_pmi(const Network& net, const InversionTarget& target, const InversionWeights& w,
               std::size_t steps_per_layer, double lr, Rng& rng, std::size_t batch_size,
               InversionTrace* trace = nullptr, std::size_t entry_layer = 0);

// Full-model objective: sum_l alpha_l * KL(batch stats of o_l || stored) for
// l = entry..L, plus the top CE/MSE term and gamma * TV. The per-layer MSE
// terms are dropped (each o_l is computed from x, there is no free target).
struct FullObjectiveResult {
    double loss = 0.0;
    double kl = 0.0;
    double match = 0.0;
    double tv = 0.0;
    Tensor grad;  // w.r.t. x
};

FullObjectiveResult full_inversion_objective(const Network& net, const Tensor& x,
                                             const InversionTarget& target,
                                             const InversionWeights& w,
                                             std::size_t entry_layer = 0);

// Adaptive-moment descent on the full objective starting from x_init.
Tensor finetune_full(const Network& net, const Tensor& x_init, const InversionTarget& target,
                     const InversionWeights& w, std::size_t steps, double lr,
                     InversionTrace* trace = nullptr, std::size_t entry_layer = 0);

}  // namespace invercl
