#include "invercl/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace invercl {

LayerStats batch_stats(const Tensor& batch, double std_floor) {
    const std::size_t n = batch.rows();
    const std::size_t d = batch.cols();
    if (n < 2) throw std::invalid_argument("batch_stats: need at least 2 samples");
    LayerStats s;
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);
    s.sample_count = n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += batch.at(i, j);
    for (std::size_t j = 0; j < d; ++j) s.mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dev = batch.at(i, j) - s.mean[j];
            s.std[j] += dev * dev;
        }
    for (std::size_t j = 0; j < d; ++j)
        s.std[j] = std::max(std_floor, std::sqrt(s.std[j] / static_cast<double>(n)));
    return s;
}

void merge_stats(LayerStats& acc, const LayerStats& incoming, double std_floor) {
    if (acc.empty()) {
        acc = incoming;
        return;
    }
    if (acc.dim() != incoming.dim())
        throw std::invalid_argument("merge_stats: dimension mismatch");
    const double na = static_cast<double>(acc.sample_count);
    const double nb = static_cast<double>(incoming.sample_count);
    const double n = na + nb;
    for (std::size_t j = 0; j < acc.dim(); ++j) {
        const double ma = acc.mean[j], mb = incoming.mean[j];
        const double m = (na * ma + nb * mb) / n;
        // pooled second central moment
        const double va = acc.std[j] * acc.std[j];
        const double vb = incoming.std[j] * incoming.std[j];
        const double v = (na * (va + (ma - m) * (ma - m)) + nb * (vb + (mb - m) * (mb - m))) / n;
        acc.mean[j] = m;
        acc.std[j] = std::max(std_floor, std::sqrt(v));
    }
    acc.sample_count += incoming.sample_count;
}

}  // namespace invercl
