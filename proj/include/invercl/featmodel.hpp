#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "invercl/network.hpp"
#include "invercl/rng.hpp"
#include "invercl/tensor.hpp"

namespace invercl {

// Diagonal Gaussian over one class's backbone features.
struct ClassGaussian {
    int class_id = -1;
    std::vector<double> mean;
    std::vector<double> std;
    std::size_t count = 0;

    std::size_t dim() const { return mean.size(); }
    std::vector<double> sample(Rng& rng) const;
};

ClassGaussian fit_class_gaussian(const std::vector<std::vector<double>>& features,
                                 int class_id = -1);

// Two dense layers with leaky-relu between; output consumed only through
// cosine similarity.
struct ContrastiveModel {
    LayerUnit hidden;  // leaky_relu
    LayerUnit output;  // linear

    std::size_t in_dim() const { return hidden.in_dim(); }
    std::vector<double> map(const std::vector<double>& x) const;
    Tensor map_batch(const Tensor& x) const;
};

ContrastiveModel make_contrastive_model(std::size_t in_dim, std::size_t hidden_dim,
                                        std::size_t out_dim, Rng& rng);

// Negative contrastive loss of one feature against a negative set:
//   log mean_j exp(cos(f(x), f(n_j)) / tau).
double contrastive_loss(const std::vector<double>& feature,
                        const std::vector<std::vector<double>>& neg_set,
                        const ContrastiveModel& model, double temperature = 1.0);

struct ContrastiveTrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// SGD on the mean in-batch negative contrastive loss; each sample's
// negative set is the rest of its minibatch.
ContrastiveModel train_contrastive(const std::vector<std::vector<double>>& features,
                                   std::size_t epochs, double lr, std::size_t batch_size,
                                   Rng& rng, std::size_t hidden_dim = 64,
                                   double temperature = 1.0,
                                   ContrastiveTrainReport* report = nullptr);

struct FeatureSet {
    enum class Provenance { sampled, selected };
    std::vector<std::vector<double>> features;
    std::vector<Provenance> provenance;

    std::size_t size() const { return features.size(); }
};

// Greedy contrastive feature selection: k0 initial Gaussian samples, then
// n steps of sampling m candidates and admitting the ceil(r*m) with the
// lowest contrastive loss against the current set (ties by candidate index).
FeatureSet cfs_select(const ClassGaussian& gauss, const ContrastiveModel& model,
                      std::size_t init_size, std::size_t steps, std::size_t candidates,
                      double keep_ratio, double temperature, Rng& rng);

void write_feature_csv(const std::vector<std::pair<int, std::vector<double>>>& rows,
                       const std::string& path);

}  // namespace invercl
