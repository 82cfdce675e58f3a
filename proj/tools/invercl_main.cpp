#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invercl/checkpoint.hpp"
#include "invercl/config.hpp"
#include "invercl/dataset.hpp"
#include "invercl/experiment.hpp"
#include "invercl/threads.hpp"

namespace {

using namespace invercl;

void write_split_csv(const std::string& path, const std::vector<std::vector<double>>& xs,
                     const std::vector<int>& ys) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "class_id";
    const std::size_t d = xs.empty() ? 0 : xs.front().size();
    for (std::size_t j = 0; j < d; ++j) f << ",x" << j;
    f << '\n';
    f.precision(17);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        f << ys[i];
        for (double v : xs[i]) f << ',' << v;
        f << '\n';
    }
}

// CSV of feature rows: optional header, first column a class id, the rest
// feature coordinates.
Tensor read_feature_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open feature file " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line.rfind("class_id", 0) == 0) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) {
                first = false;  // class id column
                continue;
            }
            row.push_back(std::stod(cell));
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::invalid_argument("feature file has no rows: " + path);
    Tensor t = Tensor::matrix(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != t.cols())
            throw std::invalid_argument("feature file rows have inconsistent width");
        for (std::size_t j = 0; j < t.cols(); ++j) t.at(i, j) = rows[i][j];
    }
    return t;
}

void write_input_csv(const std::string& path, const Tensor& x) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "sample";
    for (std::size_t j = 0; j < x.cols(); ++j) f << ",x" << j;
    f << '\n';
    f.precision(17);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        f << i;
        for (std::size_t j = 0; j < x.cols(); ++j) f << ',' << x.at(i, j);
        f << '\n';
    }
}

struct InvertOpts {
    std::string checkpoint;
    int class_id = -1;
    std::string feature_file;
    std::size_t steps_pmi = 50;
    std::size_t steps_full = 100;
    double lr_pmi = 0.1;
    double lr_full = 0.05;
    double alpha = 0.25;
    double beta = 1.0;
    double gamma = 0.0;
    std::size_t batch = 8;
    std::size_t entry_layer = 0;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
};

InversionTarget make_target(const InvertOpts& o, const Network& net, Tensor* features_out) {
    if (!o.feature_file.empty()) {
        Tensor feats = read_feature_file(o.feature_file);
        if (feats.cols() != net.feature_dim())
            throw std::invalid_argument("feature file width does not match the network");
        if (features_out) *features_out = feats;
        return InversionTarget::for_features(std::move(feats));
    }
    if (o.class_id < 0)
        throw std::invalid_argument("invert: pass --class or --feature-file");
    if (static_cast<std::size_t>(o.class_id) >= net.head.num_classes())
        throw std::invalid_argument("invert: class id out of range");
    return InversionTarget::for_label(o.class_id);
}

int run_invert(const InvertOpts& o) {
    Network net = load_network(o.checkpoint);
    Tensor feats;
    InversionTarget target = make_target(o, net, &feats);
    const std::size_t batch =
        target.kind == InversionTarget::Kind::feature_vector ? target.features.rows() : o.batch;
    InversionWeights w = InversionWeights::uniform(net.num_layers(), o.alpha, o.beta, o.gamma);
    Rng rng = Rng::substream(o.seed, "invert");
    InversionTrace trace;
    Tensor x = run_pmi(net, target, w, o.steps_pmi, o.lr_pmi, rng, batch, &trace, o.entry_layer);
    x = finetune_full(net, x, target, w, o.steps_full, o.lr_full, &trace, o.entry_layer);
    std::filesystem::create_directories(o.out_dir);
    write_input_csv(o.out_dir + "/inverted.csv", x);
    write_trace_csv(trace, o.out_dir + "/trace.csv");
    std::cout << "wrote " << x.rows() << " inverted samples to " << o.out_dir << "/inverted.csv\n";
    return 0;
}

int run_landscape(const InvertOpts& o, std::size_t grid_n, double radius, int layer_index) {
    Network net = load_network(o.checkpoint);
    Tensor feats;
    InversionTarget target = make_target(o, net, &feats);
    const std::size_t batch =
        target.kind == InversionTarget::Kind::feature_vector ? target.features.rows() : o.batch;
    InversionWeights w = InversionWeights::uniform(net.num_layers(), o.alpha, o.beta, o.gamma);
    Rng rng = Rng::substream(o.seed, "invert");
    Tensor x = run_pmi(net, target, w, o.steps_pmi, o.lr_pmi, rng, batch, nullptr, o.entry_layer);
    x = finetune_full(net, x, target, w, o.steps_full, o.lr_full, nullptr, o.entry_layer);
    std::filesystem::create_directories(o.out_dir);
    loss_landscape_slice(net, x, target, w, o.seed, grid_n, radius,
                         o.out_dir + "/landscape.csv", layer_index);
    std::cout << "wrote " << grid_n << "x" << grid_n << " landscape grid to " << o.out_dir
              << "/landscape.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("INVERCL_THREADS")) {
        try {
            invercl::set_num_threads(static_cast<std::size_t>(std::stoul(env)));
        } catch (...) {
            std::cerr << "warning: ignoring invalid INVERCL_THREADS value '" << env << "'\n";
        }
    }

    CLI::App app{"data-free continual learning laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string seed_override, out_dir_override;

    auto* run_cmd = app.add_subcommand("run", "run a full continual-learning experiment");
    run_cmd->add_option("config", config_path, "experiment config file")->required();
    run_cmd->add_option("--seed", seed_override, "override run.seed");
    run_cmd->add_option("--out-dir", out_dir_override, "override run.out_dir");

    auto* gen_cmd = app.add_subcommand("gen-data", "generate the toy dataset of a config");
    gen_cmd->add_option("config", config_path, "experiment config file")->required();
    gen_cmd->add_option("--seed", seed_override, "override run.seed");
    gen_cmd->add_option("--out-dir", out_dir_override, "override run.out_dir");

    InvertOpts io;
    auto* inv_cmd = app.add_subcommand("invert", "invert a checkpoint into synthetic inputs");
    inv_cmd->add_option("checkpoint", io.checkpoint, "network checkpoint")->required();
    inv_cmd->add_option("--class", io.class_id, "target class id");
    inv_cmd->add_option("--feature-file", io.feature_file, "CSV of target features");
    inv_cmd->add_option("--steps-pmi", io.steps_pmi, "per-layer inversion steps");
    inv_cmd->add_option("--steps-full", io.steps_full, "full-model fine-tuning steps");
    inv_cmd->add_option("--lr-pmi", io.lr_pmi, "per-layer learning rate");
    inv_cmd->add_option("--lr-full", io.lr_full, "full-model learning rate");
    inv_cmd->add_option("--alpha", io.alpha, "statistics term weight");
    inv_cmd->add_option("--beta", io.beta, "match term weight");
    inv_cmd->add_option("--gamma", io.gamma, "total-variation weight");
    inv_cmd->add_option("--batch", io.batch, "batch size for class targets");
    inv_cmd->add_option("--entry-layer", io.entry_layer, "invert down to this layer input");
    inv_cmd->add_option("--seed", io.seed, "random seed");
    inv_cmd->add_option("--out-dir", io.out_dir, "output directory");

    InvertOpts lo;
    std::size_t grid_n = 21;
    double radius = 1.0;
    int layer_index = -1;
    auto* land_cmd = app.add_subcommand("landscape", "loss surface slice around an inverted batch");
    land_cmd->add_option("checkpoint", lo.checkpoint, "network checkpoint")->required();
    land_cmd->add_option("--class", lo.class_id, "target class id");
    land_cmd->add_option("--feature-file", lo.feature_file, "CSV of target features");
    land_cmd->add_option("--steps-pmi", lo.steps_pmi, "per-layer inversion steps");
    land_cmd->add_option("--steps-full", lo.steps_full, "full-model fine-tuning steps");
    land_cmd->add_option("--alpha", lo.alpha, "statistics term weight");
    land_cmd->add_option("--beta", lo.beta, "match term weight");
    land_cmd->add_option("--gamma", lo.gamma, "total-variation weight");
    land_cmd->add_option("--batch", lo.batch, "batch size for class targets");
    land_cmd->add_option("--grid", grid_n, "grid resolution per axis");
    land_cmd->add_option("--radius", radius, "slice half-width");
    land_cmd->add_option("--layer", layer_index, "layer unit index, -1 for the full objective");
    land_cmd->add_option("--seed", lo.seed, "random seed (also picks the directions)");
    land_cmd->add_option("--out-dir", lo.out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed() || gen_cmd->parsed()) {
            invercl::ExperimentConfig cfg = invercl::load_config(config_path);
            if (!seed_override.empty()) cfg.seed = std::stoull(seed_override);
            if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;

            if (gen_cmd->parsed()) {
                invercl::Rng rng = invercl::Rng::substream(cfg.seed, "dataset");
                invercl::ToyDataset ds = invercl::gen_toy_dataset(cfg.classes, cfg.dim,
                                                                  cfg.per_class, cfg.spread, rng);
                std::filesystem::create_directories(cfg.out_dir);
                write_split_csv(cfg.out_dir + "/train.csv", ds.train_x, ds.train_y);
                write_split_csv(cfg.out_dir + "/test.csv", ds.test_x, ds.test_y);
                std::vector<int> cls(ds.num_classes);
                for (std::size_t c = 0; c < ds.num_classes; ++c) cls[c] = static_cast<int>(c);
                write_split_csv(cfg.out_dir + "/centroids.csv", ds.centroids, cls);
                std::cout << "wrote dataset (" << ds.train_x.size() << " train, "
                          << ds.test_x.size() << " test) to " << cfg.out_dir << '\n';
                return 0;
            }

            invercl::ExperimentResult res = invercl::run_experiment(cfg);
            if (res.exit_code != 0) {
                std::cerr << "error: " << res.error << '\n';
                return res.exit_code;
            }
            std::cout << "final average accuracy " << res.metrics.final_average()
                      << ", incremental average " << res.metrics.average_incremental() << '\n';
            return 0;
        }
        if (inv_cmd->parsed()) return run_invert(io);
        if (land_cmd->parsed()) return run_landscape(lo, grid_n, radius, layer_index);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
