#include "invercl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "invercl/checkpoint.hpp"
#include "invercl/dataset.hpp"
#include "invercl/projection.hpp"

namespace invercl {

namespace {

Tensor rows_to_batch(const std::vector<std::vector<double>>& xs) {
    Tensor b = Tensor::matrix(xs.size(), xs.front().size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) b.at(i, j) = xs[i][j];
    return b;
}

std::vector<double> feature_of(const Network& net, const std::vector<double>& x) {
    ForwardCache cache = forward_collect(net, Tensor::batch1(x));
    return tensor_row(cache.outputs.back(), 0);
}

// Pseudo-labelled synthetic task for a class set without real training data:
// rotate source-class features toward each new class anchor, blend, invert.
Task make_projected_task(const Network& teacher, const Task& real_task,
                         const TaskSequence& seq, const ToyDataset& ds,
                         const ClassModels& models, const ReplayConfig& rcfg,
                         double blend_alpha, std::size_t per_class, Rng& rng,
                         InversionTrace* trace) {
    Task synth;
    synth.classes = real_task.classes;
    synth.test_x = real_task.test_x;
    synth.test_y = real_task.test_y;

    std::vector<int> old_classes;
    for (const auto& [c, g] : models.gaussians) old_classes.push_back(c);
    if (old_classes.empty())
        throw std::runtime_error("projected task: no source class models available");

    for (int c : real_task.classes) {
        const std::vector<double> anchor =
            normalized(feature_of(teacher, ds.centroids[seq.class_order[c]]));

        int source = old_classes.front();
        double best = -2.0;
        for (int oc : old_classes) {
            const double cs = cosine(normalized(models.gaussians.at(oc).mean), anchor);
            if (cs > best) {
                best = cs;
                source = oc;
            }
        }
        const ClassGaussian& src = models.gaussians.at(source);
        RotationMap rot = rotation_between(normalized(src.mean), anchor);

        SemanticAnchor sem;
        sem.class_id = c;
        sem.vector = anchor;
        const std::size_t n = std::max<std::size_t>(2, per_class);
        Tensor targets = Tensor::matrix(n, src.dim());
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> pf = pseudo_feature(rot, src.sample(rng), sem, blend_alpha);
            // match the typical feature magnitude of the source class
            const double scale = norm2(src.mean);
            for (std::size_t j = 0; j < src.dim(); ++j) targets.at(i, j) = scale * pf[j];
        }
        InversionTarget target = InversionTarget::for_features(targets);
        Tensor x = run_pmi(teacher, target, rcfg.weights, rcfg.pmi_steps, rcfg.pmi_lr, rng, n,
                           trace, rcfg.entry_layer);
        x = finetune_full(teacher, x, target, rcfg.weights, rcfg.full_steps, rcfg.full_lr, trace,
                          rcfg.entry_layer);
        for (std::size_t i = 0; i < n; ++i) {
            synth.train_x.push_back(tensor_row(x, i));
            synth.train_y.push_back(c);
        }
    }
    return synth;
}

void rebuild_stats(Network& net, const Task& task, const SyntheticBuffer& buffer) {
    net.stats.assign(net.num_layers() + 1, LayerStats{});
    if (task.train_x.size() >= 2) update_layer_stats(net, rows_to_batch(task.train_x));
    if (buffer.size() >= 2) {
        std::vector<std::vector<double>> xs;
        for (const auto& e : buffer.entries) xs.push_back(e.x);
        update_layer_stats(net, rows_to_batch(xs));
    }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult result;
    try {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.out_dir);

        Rng data_rng = Rng::substream(cfg.seed, "dataset");
        ToyDataset ds =
            gen_toy_dataset(cfg.classes, cfg.dim, cfg.per_class, cfg.spread, data_rng);
        Rng split_rng = Rng::substream(cfg.seed, "split");
        TaskSequence seq = split_tasks(ds, cfg.num_tasks, split_rng);

        Rng init_rng = Rng::substream(cfg.seed, "init");
        Network net = make_mlp(cfg.layer_dims, cfg.activation, 0, cfg.head_mode, init_rng,
                               cfg.head_tau);

        ReplayConfig rcfg = cfg.replay;
        rcfg.weights =
            InversionWeights::uniform(net.num_layers(), cfg.alpha, cfg.beta, cfg.gamma);

        TrainConfig tcfg = cfg.train;
        tcfg.mode = cfg.head_mode;

        Network teacher;
        SyntheticBuffer buffer;
        ClassModels models;
        InversionTrace trace;
        Metrics metrics;
        std::vector<std::pair<int, std::vector<double>>> feature_rows;

        for (std::size_t t = 1; t <= cfg.num_tasks; ++t) {
            const Task& real_task = seq.tasks[t - 1];
            Rng task_rng = Rng::substream(cfg.seed, "task-" + std::to_string(t));

            buffer = SyntheticBuffer{};
            if (t > 1 && rcfg.enabled) {
                std::vector<int> old_classes;
                for (std::size_t c = 0; c < seq.classes_up_to(t - 1); ++c)
                    old_classes.push_back(static_cast<int>(c));
                Rng replay_rng = Rng::substream(cfg.seed, "replay-" + std::to_string(t));
                buffer = build_replay_buffer(teacher, models, old_classes, t - 1, rcfg,
                                             cfg.head_mode, replay_rng, &trace);
                feature_rows.clear();
                for (const auto& e : buffer.entries)
                    feature_rows.emplace_back(e.label, e.target_feature);
            }

            const bool projected = cfg.project_last_task && t == cfg.num_tasks && t > 1;
            Task synth;
            if (projected) {
                Rng proj_rng = Rng::substream(cfg.seed, "project-" + std::to_string(t));
                const std::size_t per_class =
                    real_task.train_x.size() / std::max<std::size_t>(1, real_task.classes.size());
                synth = make_projected_task(teacher, real_task, seq, ds, models, rcfg,
                                            cfg.projection_alpha, per_class, proj_rng, &trace);
            }
            const Task& task = projected ? synth : real_task;

            if (cfg.head_mode == HeadMode::linear) {
                Rng head_rng = Rng::substream(cfg.seed, "head-" + std::to_string(t));
                extend_head_linear(net, task.classes.size(), head_rng);
            } else {
                std::vector<std::vector<double>> anchors;
                for (int c : task.classes)
                    anchors.push_back(feature_of(net, ds.centroids[seq.class_order[c]]));
                extend_head_anchor(net, anchors);
            }

            train_task(net, task, t, buffer, t > 1 ? &teacher : nullptr, tcfg, task_rng);

            rebuild_stats(net, task, buffer);
            if (t > 1 && cfg.head_mode == HeadMode::linear && !buffer.entries.empty()) {
                Rng refresh_rng = Rng::substream(cfg.seed, "refresh-" + std::to_string(t));
                refresh_old_class_models(net, buffer, models, rcfg, cfg.head_mode, refresh_rng);
            }
            Rng models_rng = Rng::substream(cfg.seed, "models-" + std::to_string(t));
            fit_class_models(net, task.train_x, task.train_y, task.classes, models, rcfg,
                             models_rng);

            EvalRow row = evaluate(net, seq, t);
            metrics.per_task.push_back(row.per_task);
            metrics.stage_average.push_back(row.average);

            teacher = net;
            save_network(net, cfg.out_dir + "/model_task" + std::to_string(t) + ".ckpt");
        }

        save_network(net, cfg.out_dir + "/model.ckpt");
        write_metrics_csv(metrics, cfg.out_dir + "/metrics.csv");
        write_trace_csv(trace, cfg.out_dir + "/trace.csv");
        write_feature_csv(feature_rows, cfg.out_dir + "/features.csv");
        std::ofstream cf(cfg.out_dir + "/config.txt", std::ios::binary);
        cf << config_to_text(cfg);

        result.metrics = metrics;
    } catch (const std::invalid_argument& e) {
        result.exit_code = 2;
        result.error = e.what();
    } catch (const std::exception& e) {
        result.exit_code = 3;
        result.error = e.what();
    }
    return result;
}

namespace {

double slice_loss(const Network& net, const Tensor& x, const InversionTarget& target,
                  const InversionWeights& w, int layer_index) {
    if (layer_index < 0) return full_inversion_objective(net, x, target, w).loss;
    const std::size_t l = static_cast<std::size_t>(layer_index);
    if (l >= net.num_layers())
        throw std::invalid_argument("loss_landscape: layer index out of range");
    Tensor layer_target = layer_forward(net.layers[l], x);
    // candidate-vs-stats term only makes sense against the stored stats of
    // this layer's input
    LayerObjectiveResult r = layer_inversion_objective(net.layers[l], x, layer_target,
                                                       net.stats[l], w.alpha[l], w.beta[l]);
    return r.loss;
}

void orthonormal_pair(std::size_t d, std::uint64_t seed, std::vector<double>& d1,
                      std::vector<double>& d2) {
    Rng rng = Rng::substream(seed, "landscape-directions");
    d1.resize(d);
    d2.resize(d);
    for (double& v : d1) v = rng.normal();
    d1 = normalized(d1);
    for (double& v : d2) v = rng.normal();
    const double p = dot(d2, d1);
    for (std::size_t i = 0; i < d; ++i) d2[i] -= p * d1[i];
    d2 = normalized(d2);
}

void slice_impl(const Network& net, const Tensor& x_star, const InversionTarget& target,
                const InversionWeights& w, std::uint64_t directions_seed, std::size_t grid_n,
                double radius, int layer_index, std::ostream* csv, double* lo, double* hi) {
    if (grid_n < 2) throw std::invalid_argument("loss_landscape: grid_n must be >= 2");
    if (radius < 0.0) throw std::invalid_argument("loss_landscape: radius must be >= 0");
    const std::size_t d = x_star.cols();
    std::vector<double> d1, d2;
    orthonormal_pair(d, directions_seed, d1, d2);

    if (csv) {
        *csv << "s,t,loss\n";
        csv->precision(17);
    }
    for (std::size_t a = 0; a < grid_n; ++a) {
        const double s = -radius + 2.0 * radius * static_cast<double>(a) /
                                       static_cast<double>(grid_n - 1);
        for (std::size_t b = 0; b < grid_n; ++b) {
            const double t = -radius + 2.0 * radius * static_cast<double>(b) /
                                           static_cast<double>(grid_n - 1);
            Tensor x = x_star;
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    x.at(i, j) += s * d1[j] + t * d2[j];
            const double loss = slice_loss(net, x, target, w, layer_index);
            if (csv) *csv << s << ',' << t << ',' << loss << '\n';
            if (lo) *lo = std::min(*lo, loss);
            if (hi) *hi = std::max(*hi, loss);
        }
    }
}

}  // namespace

void loss_landscape_slice(const Network& net, const Tensor& x_star, const InversionTarget& target,
                          const InversionWeights& w, std::uint64_t directions_seed,
                          std::size_t grid_n, double radius, const std::string& csv_path,
                          int layer_index) {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open landscape file " + csv_path);
    slice_impl(net, x_star, target, w, directions_seed, grid_n, radius, layer_index, &f, nullptr,
               nullptr);
}

double loss_landscape_range(const Network& net, const Tensor& x_star, const InversionTarget& target,
                            const InversionWeights& w, std::uint64_t directions_seed,
                            std::size_t grid_n, double radius, int layer_index) {
    double lo = 1.0 / 0.0, hi = -1.0 / 0.0;
    slice_impl(net, x_star, target, w, directions_seed, grid_n, radius, layer_index, nullptr, &lo,
               &hi);
    return hi - lo;
}

}  // namespace invercl
