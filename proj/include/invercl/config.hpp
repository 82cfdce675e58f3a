#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "invercl/clharness.hpp"
#include "invercl/network.hpp"

namespace invercl {

// Flat key-value experiment configuration with section prefixes, e.g.
//   inversion.steps_full=100
struct ExperimentConfig {
    // dataset
    std::size_t classes = 10;
    std::size_t dim = 16;
    std::size_t per_class = 40;
    double spread = 0.1;
    // network
    std::vector<std::size_t> layer_dims = {16, 32, 32};
    Activation activation = Activation::leaky_relu;
    HeadMode head_mode = HeadMode::linear;
    double head_tau = 10.0;
    // continual learning
    std::size_t num_tasks = 5;
    TrainConfig train;
    ReplayConfig replay;
    // inversion defaults (also used by the `invert` verb)
    double alpha = 0.25;
    double beta = 1.0;
    double gamma = 0.0;
    // run
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    // held-out final task trained from projected pseudo features only
    bool project_last_task = false;
    double projection_alpha = 0.1;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_text(const ExperimentConfig& cfg);

}  // namespace invercl
