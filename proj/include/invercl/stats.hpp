#pragma once

#include <cstddef>
#include <vector>

#include "invercl/tensor.hpp"

namespace invercl {

inline constexpr double kStdFloor = 1e-6;

// Per-dimension input statistics of one layer, pooled exactly across
// batches (count-weighted moment merge, not exponential decay).
struct LayerStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::size_t sample_count = 0;

    std::size_t dim() const { return mean.size(); }
    bool empty() const { return sample_count == 0; }
};

// Population mean/std per column of a (N, d) batch, std floored.
// Requires N >= 2.
LayerStats batch_stats(const Tensor& batch, double std_floor = kStdFloor);

// Merges `incoming` into `acc` by exact count-weighted pooling: the result
// equals statistics computed over the concatenation of all merged batches.
void merge_stats(LayerStats& acc, const LayerStats& incoming, double std_floor = kStdFloor);

}  // namespace invercl
