#include "invercl/featmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace invercl {

std::vector<double> ClassGaussian::sample(Rng& rng) const {
    std::vector<double> x(dim());
    for (std::size_t j = 0; j < dim(); ++j) x[j] = rng.normal(mean[j], std[j]);
    return x;
}

ClassGaussian fit_class_gaussian(const std::vector<std::vector<double>>& features, int class_id) {
    if (features.size() < 2)
        throw std::invalid_argument("fit_class_gaussian: need at least 2 features");
    const std::size_t d = features.front().size();
    Tensor batch = Tensor::matrix(features.size(), d);
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != d)
            throw std::invalid_argument("fit_class_gaussian: inconsistent dimensions");
        for (std::size_t j = 0; j < d; ++j) batch.at(i, j) = features[i][j];
    }
    LayerStats s = batch_stats(batch);
    ClassGaussian g;
    g.class_id = class_id;
    g.mean = std::move(s.mean);
    g.std = std::move(s.std);
    g.count = features.size();
    return g;
}

std::vector<double> ContrastiveModel::map(const std::vector<double>& x) const {
    Tensor b = Tensor::batch1(x);
    return tensor_row(map_batch(b), 0);
}

Tensor ContrastiveModel::map_batch(const Tensor& x) const {
    return layer_forward(output, layer_forward(hidden, x));
}

ContrastiveModel make_contrastive_model(std::size_t in_dim, std::size_t hidden_dim,
                                        std::size_t out_dim, Rng& rng) {
    ContrastiveModel m;
    m.hidden.weight = Tensor::matrix(hidden_dim, in_dim);
    m.hidden.bias = Tensor({hidden_dim}, 0.0);
    m.hidden.activation = Activation::leaky_relu;
    m.output.weight = Tensor::matrix(out_dim, hidden_dim);
    m.output.bias = Tensor({out_dim}, 0.0);
    m.output.activation = Activation::none;
    const double s1 = std::sqrt(2.0 / static_cast<double>(in_dim + hidden_dim));
    const double s2 = std::sqrt(2.0 / static_cast<double>(hidden_dim + out_dim));
    for (double& w : m.hidden.weight.data) w = rng.normal(0.0, s1);
    for (double& w : m.output.weight.data) w = rng.normal(0.0, s2);
    return m;
}

double contrastive_loss(const std::vector<double>& feature,
                        const std::vector<std::vector<double>>& neg_set,
                        const ContrastiveModel& model, double temperature) {
    if (neg_set.empty()) throw std::invalid_argument("contrastive_loss: empty negative set");
    if (temperature <= 0.0) throw std::invalid_argument("contrastive_loss: temperature must be > 0");
    const std::vector<double> zi = model.map(feature);
    // log-mean-exp with max shift
    std::vector<double> cs(neg_set.size());
    double mx = -1.0 / 0.0;
    for (std::size_t j = 0; j < neg_set.size(); ++j) {
        if (neg_set[j] == feature)
            throw std::invalid_argument("contrastive_loss: negative set contains the feature itself");
        cs[j] = cosine(zi, model.map(neg_set[j])) / temperature;
        mx = std::max(mx, cs[j]);
    }
    double z = 0.0;
    for (double c : cs) z += std::exp(c - mx);
    return mx + std::log(z / static_cast<double>(neg_set.size()));
}

namespace {

struct MlpGrads {
    Tensor w1, b1, w2, b2;
};

double contrastive_batch(const ContrastiveModel& m, const Tensor& x, double tau, MlpGrads* grads) {
    const std::size_t B = x.rows();
    Tensor pre1;
    Tensor h = layer_forward(m.hidden, x, &pre1);
    Tensor pre2;
    Tensor z = layer_forward(m.output, h, &pre2);
    const std::size_t d = z.cols();

    std::vector<double> norms(B);
    for (std::size_t i = 0; i < B; ++i) norms[i] = norm2(tensor_row(z, i));

    Tensor gz = Tensor::matrix(B, d);
    double total = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        std::vector<double> c(B, 0.0);
        double mx = -1.0 / 0.0;
        for (std::size_t j = 0; j < B; ++j) {
            if (j == i) continue;
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += z.at(i, k) * z.at(j, k);
            c[j] = s / (norms[i] * norms[j] * tau);
            mx = std::max(mx, c[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < B; ++j)
            if (j != i) sum += std::exp(c[j] - mx);
        total += mx + std::log(sum / static_cast<double>(B - 1));
        if (grads) {
            for (std::size_t j = 0; j < B; ++j) {
                if (j == i) continue;
                const double w = std::exp(c[j] - mx) / sum;  // softmax weight
                const double g = w / (tau * static_cast<double>(B));  // d mean-loss / d cos_ij
                const double cij = c[j] * tau;
                for (std::size_t k = 0; k < d; ++k) {
                    gz.at(i, k) += g * (z.at(j, k) / (norms[i] * norms[j]) -
                                        cij * z.at(i, k) / (norms[i] * norms[i]));
                    gz.at(j, k) += g * (z.at(i, k) / (norms[i] * norms[j]) -
                                        cij * z.at(j, k) / (norms[j] * norms[j]));
                }
            }
        }
    }
    if (grads) {
        grads->w2 = Tensor(m.output.weight.shape, 0.0);
        grads->b2 = Tensor(m.output.bias.shape, 0.0);
        grads->w1 = Tensor(m.hidden.weight.shape, 0.0);
        grads->b1 = Tensor(m.hidden.bias.shape, 0.0);
        Tensor gh = Tensor::matrix(B, h.cols());
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t o = 0; o < m.output.out_dim(); ++o) {
                const double delta = gz.at(i, o);  // linear output layer
                if (delta == 0.0) continue;
                grads->b2.data[o] += delta;
                for (std::size_t k = 0; k < h.cols(); ++k) {
                    grads->w2.at(o, k) += delta * h.at(i, k);
                    gh.at(i, k) += delta * m.output.weight.at(o, k);
                }
            }
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t o = 0; o < m.hidden.out_dim(); ++o) {
                const double delta =
                    gh.at(i, o) * activation_grad(m.hidden.activation, pre1.at(i, o));
                if (delta == 0.0) continue;
                grads->b1.data[o] += delta;
                for (std::size_t k = 0; k < x.cols(); ++k)
                    grads->w1.at(o, k) += delta * x.at(i, k);
            }
    }
    return total / static_cast<double>(B);
}

Tensor to_batch(const std::vector<std::vector<double>>& features,
                const std::vector<std::size_t>& idx) {
    Tensor b = Tensor::matrix(idx.size(), features.front().size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) b.at(i, j) = features[idx[i]][j];
    return b;
}

}  // namespace

ContrastiveModel train_contrastive(const std::vector<std::vector<double>>& features,
                                   std::size_t epochs, double lr, std::size_t batch_size,
                                   Rng& rng, std::size_t hidden_dim, double temperature,
                                   ContrastiveTrainReport* report) {
    if (features.size() < 8)
        throw std::invalid_argument("train_contrastive: need at least 8 features");
    const std::size_t d = features.front().size();
    ContrastiveModel m = make_contrastive_model(d, hidden_dim, hidden_dim, rng);
    batch_size = std::max<std::size_t>(2, std::min(batch_size, features.size()));

    std::vector<std::size_t> all(features.size());
    std::iota(all.begin(), all.end(), 0);
    const Tensor full = to_batch(features, all);
    if (report) report->initial_loss = contrastive_batch(m, full, temperature, nullptr);

    for (std::size_t e = 0; e < epochs; ++e) {
        std::vector<std::size_t> perm = rng.permutation(features.size());
        for (std::size_t start = 0; start + 2 <= perm.size(); start += batch_size) {
            const std::size_t end = std::min(start + batch_size, perm.size());
            if (end - start < 2) break;
            std::vector<std::size_t> idx(perm.begin() + start, perm.begin() + end);
            Tensor xb = to_batch(features, idx);
            MlpGrads g;
            contrastive_batch(m, xb, temperature, &g);
            for (std::size_t i = 0; i < m.hidden.weight.numel(); ++i)
                m.hidden.weight.data[i] -= lr * g.w1.data[i];
            for (std::size_t i = 0; i < m.hidden.bias.numel(); ++i)
                m.hidden.bias.data[i] -= lr * g.b1.data[i];
            for (std::size_t i = 0; i < m.output.weight.numel(); ++i)
                m.output.weight.data[i] -= lr * g.w2.data[i];
            for (std::size_t i = 0; i < m.output.bias.numel(); ++i)
                m.output.bias.data[i] -= lr * g.b2.data[i];
        }
    }
    if (report) report->final_loss = contrastive_batch(m, full, temperature, nullptr);
    return m;
}

FeatureSet cfs_select(const ClassGaussian& gauss, const ContrastiveModel& model,
                      std::size_t init_size, std::size_t steps, std::size_t candidates,
                      double keep_ratio, double temperature, Rng& rng) {
    if (init_size < 1) throw std::invalid_argument("cfs_select: init_size must be >= 1");
    if (candidates < 1) throw std::invalid_argument("cfs_select: candidates must be >= 1");
    if (keep_ratio <= 0.0 || keep_ratio > 1.0)
        throw std::invalid_argument("cfs_select: keep ratio must be in (0, 1]");
    FeatureSet set;
    for (std::size_t i = 0; i < init_size; ++i) {
        set.features.push_back(gauss.sample(rng));
        set.provenance.push_back(FeatureSet::Provenance::sampled);
    }
    const std::size_t keep =
        static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(candidates)));
    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<std::vector<double>> cand(candidates);
        std::vector<double> score(candidates);
        for (std::size_t j = 0; j < candidates; ++j) {
            cand[j] = gauss.sample(rng);
            score[j] = contrastive_loss(cand[j], set.features, model, temperature);
        }
        std::vector<std::size_t> order(candidates);
        std::iota(order.begin(), order.end(), 0);
        // lowest score first, ties by candidate index
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
        for (std::size_t j = 0; j < std::min(keep, candidates); ++j) {
            set.features.push_back(cand[order[j]]);
            set.provenance.push_back(FeatureSet::Provenance::selected);
        }
    }
    return set;
}

void write_feature_csv(const std::vector<std::pair<int, std::vector<double>>>& rows,
                       const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open feature file " + path);
    if (rows.empty()) {
        f << "class_id\n";
        return;
    }
    f << "class_id";
    for (std::size_t j = 0; j < rows.front().second.size(); ++j) f << ",f" << j;
    f << '\n';
    f.precision(17);
    for (const auto& [cid, vec] : rows) {
        f << cid;
        for (double v : vec) f << ',' << v;
        f << '\n';
    }
}

}  // namespace invercl
