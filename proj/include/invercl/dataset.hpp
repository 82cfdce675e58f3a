#pragma once

#include <cstddef>
#include <vector>

#include "invercl/rng.hpp"
#include "invercl/tensor.hpp"

namespace invercl {

// Gaussian blobs around unit-sphere centroids; centroids double as the
// class semantic anchors after normalization.
struct ToyDataset {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::vector<std::vector<double>> centroids;  // per class, unit norm
    std::vector<std::vector<double>> train_x;
    std::vector<int> train_y;
    std::vector<std::vector<double>> test_x;
    std::vector<int> test_y;
};

ToyDataset gen_toy_dataset(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                           double spread, Rng& rng);

}  // namespace invercl
