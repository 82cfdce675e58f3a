#include "invercl/dataset.hpp"

#include <stdexcept>

namespace invercl {

ToyDataset gen_toy_dataset(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                           double spread, Rng& rng) {
    if (num_classes < 2 || dim < 2 || per_class < 4)
        throw std::invalid_argument("gen_toy_dataset: need K >= 2, dim >= 2, n >= 4");
    if (spread < 0.0) throw std::invalid_argument("gen_toy_dataset: negative spread");
    ToyDataset ds;
    ds.dim = dim;
    ds.num_classes = num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> centroid(dim);
        for (double& v : centroid) v = rng.normal();
        ds.centroids.push_back(normalized(centroid));
    }
    const std::size_t n_test = per_class / 5;  // 80/20 split
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<double> x(dim);
            for (std::size_t j = 0; j < dim; ++j)
                x[j] = ds.centroids[c][j] + spread * rng.normal();
            if (i < n_test) {
                ds.test_x.push_back(std::move(x));
                ds.test_y.push_back(static_cast<int>(c));
            } else {
                ds.train_x.push_back(std::move(x));
                ds.train_y.push_back(static_cast<int>(c));
            }
        }
    }
    return ds;
}

}  // namespace invercl
