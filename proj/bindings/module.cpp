// Python bindings for the main operations: experiment runs, inversion from a
// checkpoint, feature selection, projection and the KL/rotation primitives.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>

#include "invercl/checkpoint.hpp"
#include "invercl/clharness.hpp"
#include "invercl/config.hpp"
#include "invercl/experiment.hpp"
#include "invercl/featmodel.hpp"
#include "invercl/inversion.hpp"
#include "invercl/network.hpp"
#include "invercl/projection.hpp"
#include "invercl/threads.hpp"

namespace py = pybind11;
using namespace invercl;

namespace {

std::vector<std::vector<double>> tensor_to_rows(const Tensor& t) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < t.rows(); ++i) rows.push_back(tensor_row(t, i));
    return rows;
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("empty batch");
    Tensor t = Tensor::matrix(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != t.cols()) throw std::invalid_argument("ragged batch");
        for (std::size_t j = 0; j < t.cols(); ++j) t.at(i, j) = rows[i][j];
    }
    return t;
}

py::dict metrics_to_dict(const Metrics& m) {
    py::dict d;
    d["per_task"] = m.per_task;
    d["stage_average"] = m.stage_average;
    d["final_average"] = m.final_average();
    d["average_incremental"] = m.average_incremental();
    return d;
}

py::dict run_from_text(const std::string& config_text, std::optional<std::uint64_t> seed,
                       std::optional<std::string> out_dir) {
    ExperimentConfig cfg = parse_config_text(config_text);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    ExperimentResult r = run_experiment(cfg);
    if (r.exit_code == 2) throw std::invalid_argument(r.error);
    if (r.exit_code != 0) throw std::runtime_error(r.error);
    return metrics_to_dict(r.metrics);
}

std::vector<std::vector<double>> invert_checkpoint(
    const std::string& checkpoint, std::optional<int> label,
    std::optional<std::vector<std::vector<double>>> features, std::size_t steps_pmi,
    std::size_t steps_full, double lr_pmi, double lr_full, double alpha, double beta,
    double gamma, std::size_t batch, std::size_t entry_layer, std::uint64_t seed) {
    Network net = load_network(checkpoint);
    InversionTarget target;
    std::size_t n = batch;
    if (label) {
        target = InversionTarget::for_label(*label);
    } else if (features && !features->empty()) {
        target = InversionTarget::for_features(rows_to_tensor(*features));
        n = features->size();
    } else {
        throw std::invalid_argument("invert: need a class label or target features");
    }
    InversionWeights w = InversionWeights::uniform(net.num_layers(), alpha, beta, gamma);
    Rng rng(seed);
    Tensor x = run_pmi(net, target, w, steps_pmi, lr_pmi, rng, n, nullptr, entry_layer);
    x = finetune_full(net, x, target, w, steps_full, lr_full, nullptr, entry_layer);
    return tensor_to_rows(x);
}

}  // namespace

PYBIND11_MODULE(_invercl, m) {
    m.doc() = "continual learning via per-layer model inversion";

    m.def("set_num_threads", &set_num_threads, py::arg("n"),
          "cap the number of worker threads used for replay synthesis");
    m.def("num_threads", &num_threads);

    m.def("gaussian_kl", &gaussian_kl, py::arg("mu1"), py::arg("std1"), py::arg("mu2"),
          py::arg("std2"), "closed-form KL between diagonal Gaussians");

    m.def(
        "rotation_between",
        [](const std::vector<double>& u, const std::vector<double>& v) {
            return tensor_to_rows(rotation_between(u, v).matrix);
        },
        py::arg("u"), py::arg("v"),
        "minimal 2-plane rotation matrix with R u = v, identity elsewhere");

    m.def(
        "pseudo_feature",
        [](const std::vector<double>& u, const std::vector<double>& v,
           const std::vector<double>& source_feature, const std::vector<double>& anchor,
           double alpha) {
            RotationMap rot = rotation_between(u, v);
            SemanticAnchor sem;
            sem.vector = anchor;
            return pseudo_feature(rot, source_feature, sem, alpha);
        },
        py::arg("u"), py::arg("v"), py::arg("source_feature"), py::arg("anchor"),
        py::arg("alpha"),
        "rotate a source feature along u -> v, blend toward the anchor, renormalize");

    py::class_<ContrastiveModel>(m, "ContrastiveModel")
        .def("map", &ContrastiveModel::map, py::arg("x"))
        .def_property_readonly("in_dim", &ContrastiveModel::in_dim);

    m.def(
        "train_contrastive",
        [](const std::vector<std::vector<double>>& features, std::size_t epochs, double lr,
           std::size_t batch_size, std::uint64_t seed, std::size_t hidden_dim,
           double temperature) {
            Rng rng(seed);
            return train_contrastive(features, epochs, lr, batch_size, rng, hidden_dim,
                                     temperature);
        },
        py::arg("features"), py::arg("epochs") = 40, py::arg("lr") = 0.01,
        py::arg("batch_size") = 16, py::arg("seed") = 1, py::arg("hidden_dim") = 64,
        py::arg("temperature") = 1.0);

    m.def(
        "cfs_select",
        [](const std::vector<double>& mean, const std::vector<double>& std,
           const ContrastiveModel& model, std::size_t init_size, std::size_t steps,
           std::size_t candidates, double keep_ratio, double temperature,
           std::uint64_t seed) {
            ClassGaussian g;
            g.mean = mean;
            g.std = std;
            Rng rng(seed);
            return cfs_select(g, model, init_size, steps, candidates, keep_ratio, temperature,
                              rng)
                .features;
        },
        py::arg("mean"), py::arg("std"), py::arg("model"), py::arg("init_size"),
        py::arg("steps"), py::arg("candidates"), py::arg("keep_ratio") = 0.5,
        py::arg("temperature") = 1.0, py::arg("seed") = 1,
        "greedy contrastive feature selection from a class Gaussian");

    m.def("run_experiment", &run_from_text, py::arg("config_text"),
          py::arg("seed") = py::none(), py::arg("out_dir") = py::none(),
          "run the continual-learning loop; returns the metrics as a dict");

    m.def("invert", &invert_checkpoint, py::arg("checkpoint"), py::arg("label") = py::none(),
          py::arg("features") = py::none(), py::arg("steps_pmi") = 50,
          py::arg("steps_full") = 100, py::arg("lr_pmi") = 0.1, py::arg("lr_full") = 0.05,
          py::arg("alpha") = 0.25, py::arg("beta") = 1.0, py::arg("gamma") = 0.0,
          py::arg("batch") = 8, py::arg("entry_layer") = 0, py::arg("seed") = 1,
          "layer-by-layer inversion plus full-model fine-tune from a checkpoint");

    m.def(
        "forward",
        [](const std::string& checkpoint, const std::vector<std::vector<double>>& xs) {
            Network net = load_network(checkpoint);
            ForwardCache c = forward_collect(net, rows_to_tensor(xs));
            py::dict d;
            d["features"] = tensor_to_rows(c.outputs.back());
            d["logits"] = tensor_to_rows(c.logits);
            return d;
        },
        py::arg("checkpoint"), py::arg("inputs"),
        "backbone features and head logits of a stored network");
}
