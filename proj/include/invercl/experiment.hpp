#pragma once

#include <string>

#include "invercl/config.hpp"
#include "invercl/inversion.hpp"

namespace invercl {

struct ExperimentResult {
    Metrics metrics;
    int exit_code = 0;
    std::string error;
};

// Runs the full continual-learning loop (train -> buffer build -> replay ->
// stats refresh -> evaluate per stage) and writes metrics, traces and
// checkpoints under cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Evaluates the inversion loss on an n x n grid around x_star along two
// random orthonormal directions; writes CSV rows (s, t, loss).
// layer_index < 0 selects the full-model objective; otherwise the loss of
// that single layer unit (0-based).
void loss_landscape_slice(const Network& net, const Tensor& x_star, const InversionTarget& target,
                          const InversionWeights& w, std::uint64_t directions_seed,
                          std::size_t grid_n, double radius, const std::string& csv_path,
                          int layer_index = -1);

// Range (max - min) of the slice without writing a file; used by tests.
double loss_landscape_range(const Network& net, const Tensor& x_star, const InversionTarget& target,
                            const InversionWeights& w, std::uint64_t directions_seed,
                            std::size_t grid_n, double radius, int layer_index = -1);

}  // namespace invercl
