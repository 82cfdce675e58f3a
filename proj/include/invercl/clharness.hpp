#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "invercl/dataset.hpp"
#include "invercl/featmodel.hpp"
#include "invercl/inversion.hpp"
#include "invercl/network.hpp"
#include "invercl/projection.hpp"

namespace invercl {

struct Task {
    std::vector<int> classes;
    std::vector<std::vector<double>> train_x;
    std::vector<int> train_y;
    std::vector<std::vector<double>> test_x;
    std::vector<int> test_y;
};

struct TaskSequence {
    std::vector<Task> tasks;
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    // class_order[new_id] = original dataset class id; tasks use contiguous
    // new ids so the head can grow by appending rows.
    std::vector<std::size_t> class_order;

    std::size_t classes_up_to(std::size_t t) const;  // |C_1..t|, t is 1-based
};

// Deterministic class-ordered split into T disjoint tasks; the class count
// must be divisible by T.
TaskSequence split_tasks(const ToyDataset& data, std::size_t num_tasks, Rng& rng);

// Replay store of synthesized inputs.
struct SyntheticBuffer {
    struct Entry {
        std::vector<double> x;
        int label = -1;
        std::vector<double> target_feature;
        std::size_t created_at_task = 0;
    };
    std::vector<Entry> entries;

    std::size_t size() const { return entries.size(); }
    std::vector<std::size_t> indices_for_class(int c) const;
};

struct CLLossWeights {
    double lambda_hkd = 0.15;
    double lambda_rkd = 0.5;
    double lambda_ft = 1.5;
    double lambda_tkd = 0.2;
    double lambda_tft = 0.001;
    bool scale_by_class_ratio = true;  // multiply hkd/rkd by sqrt(|C_old| / |C_t|)
};

// Distillation losses --------------------------------------------------------

// Mean absolute difference over old-class logits. 0 when no old classes.
double hkd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                std::size_t num_old_classes, Tensor* grad_student = nullptr);

// Mean squared difference between all pairwise cosine similarities of the
// student and teacher feature batches. 0 for batches of one.
double rkd_loss(const Tensor& student_feats, const Tensor& teacher_feats,
                Tensor* grad_student = nullptr);

// Cross-entropy over all seen classes; the caller routes the gradient to
// the head only.
double ft_loss(const Tensor& logits, const std::vector<int>& labels, Tensor* grad = nullptr);

// Mean L1 distance between corresponding anchors (anchor mode).
double tkd_loss(const Tensor& old_anchors, const Tensor& current_anchors,
                Tensor* grad_current = nullptr);

// Cross-entropy of cosine logits over all seen classes, gradient w.r.t. the
// anchors only.
double tft_loss(const Tensor& features, const Tensor& anchors, double tau,
                const std::vector<int>& labels, Tensor* grad_anchors = nullptr);

// Harness --------------------------------------------------------------------

struct ReplayConfig {
    bool enabled = true;
    bool use_cfs = true;
    // linear mode growth: total buffer size a*t + b after task t
    std::size_t growth_a = 4;
    std::size_t growth_b = 6;
    // anchor mode: per-class quota
    std::size_t per_class_quota = 5;
    // inversion settings
    std::size_t pmi_steps = 50;
    std::size_t full_steps = 100;
    double pmi_lr = 0.1;
    double full_lr = 0.05;
    InversionWeights weights;
    std::size_t entry_layer = 0;
    // CFS settings
    std::size_t cfs_init_size = 0;  // 0 = ceil(r*m)
    std::size_t cfs_steps = 4;
    std::size_t cfs_candidates = 8;
    double cfs_keep_ratio = 0.5;
    double cfs_temperature = 1.0;
    std::size_t contrastive_hidden = 64;
    std::size_t contrastive_epochs = 40;
    double contrastive_lr = 0.01;
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double lr = 0.01;
    CLLossWeights loss_weights;
    HeadMode mode = HeadMode::linear;
};

struct Metrics {
    // accuracy[stage][task] for task <= stage (lower triangular), 1-based
    // indices stored 0-based.
    std::vector<std::vector<double>> per_task;
    std::vector<double> stage_average;

    double final_average() const { return stage_average.empty() ? 0.0 : stage_average.back(); }
    double average_incremental() const;
};

void write_metrics_csv(const Metrics& m, const std::string& path);

struct ClassModels {
    std::map<int, ClassGaussian> gaussians;
    std::map<int, ContrastiveModel> contrastive;
};

// Fits Gaussians (and trains contrastive models) for the given classes from
// real data features under the current network.
void fit_class_models(const Network& net, const std::vector<std::vector<double>>& xs,
                      const std::vector<int>& ys, const std::vector<int>& classes,
                      ClassModels& models, const ReplayConfig& cfg, Rng& rng);

// Builds the replay buffer for all old classes from the frozen teacher.
SyntheticBuffer build_replay_buffer(const Network& teacher, const ClassModels& models,
                                    const std::vector<int>& old_classes, std::size_t task_index,
                                    const ReplayConfig& cfg, HeadMode mode, Rng& rng,
                                    InversionTrace* trace = nullptr);

// Grow the head by rows for new classes (linear: fresh random rows;
// anchor: the given vectors, normalized).
void extend_head_linear(Network& net, std::size_t new_classes, Rng& rng);
void extend_head_anchor(Network& net, const std::vector<std::vector<double>>& anchors);

// One task of class-incremental training with synthetic replay.
void train_task(Network& net, const Task& task, std::size_t task_index,
                const SyntheticBuffer& buffer, const Network* teacher, const TrainConfig& cfg,
                Rng& rng);

// Recomputes old-class Gaussians and retrains contrastive models from the
// current network's features of the buffer entries. No-op in anchor mode.
void refresh_old_class_models(const Network& net, const SyntheticBuffer& buffer,
                              ClassModels& models, const ReplayConfig& cfg, HeadMode mode,
                              Rng& rng);

// Accuracy over the union of test sets of tasks 1..t, logits over all seen
// classes; also per-task accuracies.
struct EvalRow {
    std::vector<double> per_task;
    double average = 0.0;
};

EvalRow evaluate(const Network& net, const TaskSequence& seq, std::size_t up_to_task);

}  // namespace invercl
