#include "invercl/clharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "invercl/adam.hpp"
#include "invercl/threads.hpp"

namespace invercl {

std::size_t TaskSequence::classes_up_to(std::size_t t) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < t && i < tasks.size(); ++i) n += tasks[i].classes.size();
    return n;
}

TaskSequence split_tasks(const ToyDataset& data, std::size_t num_tasks, Rng& rng) {
    if (num_tasks == 0 || data.num_classes % num_tasks != 0)
        throw std::invalid_argument("split_tasks: class count not divisible by task count");
    const std::size_t per_task = data.num_classes / num_tasks;
    // Permute original class ids, then relabel in task order so each task's
    // class set is a contiguous range of new ids.
    std::vector<std::size_t> order = rng.permutation(data.num_classes);
    std::vector<int> new_id(data.num_classes);
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        new_id[order[pos]] = static_cast<int>(pos);

    TaskSequence seq;
    seq.num_classes = data.num_classes;
    seq.dim = data.dim;
    seq.class_order = order;
    seq.tasks.resize(num_tasks);
    for (std::size_t t = 0; t < num_tasks; ++t)
        for (std::size_t k = 0; k < per_task; ++k)
            seq.tasks[t].classes.push_back(static_cast<int>(t * per_task + k));
    for (std::size_t i = 0; i < data.train_x.size(); ++i) {
        const int y = new_id[data.train_y[i]];
        Task& task = seq.tasks[static_cast<std::size_t>(y) / per_task];
        task.train_x.push_back(data.train_x[i]);
        task.train_y.push_back(y);
    }
    for (std::size_t i = 0; i < data.test_x.size(); ++i) {
        const int y = new_id[data.test_y[i]];
        Task& task = seq.tasks[static_cast<std::size_t>(y) / per_task];
        task.test_x.push_back(data.test_x[i]);
        task.test_y.push_back(y);
    }
    return seq;
}

std::vector<std::size_t> SyntheticBuffer::indices_for_class(int c) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].label == c) idx.push_back(i);
    return idx;
}

// Losses ---------------------------------------------------------------------

double hkd_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                std::size_t num_old_classes, Tensor* grad_student) {
    if (student_logits.rows() != teacher_logits.rows())
        throw std::invalid_argument("hkd_loss: batch mismatch");
    if (grad_student) *grad_student = Tensor(student_logits.shape, 0.0);
    if (num_old_classes == 0) return 0.0;
    if (num_old_classes > student_logits.cols() || num_old_classes > teacher_logits.cols())
        throw std::invalid_argument("hkd_loss: old class count exceeds logits");
    const std::size_t n = student_logits.rows();
    const double count = static_cast<double>(n * num_old_classes);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < num_old_classes; ++c) {
            const double dv = student_logits.at(i, c) - teacher_logits.at(i, c);
            total += std::abs(dv);
            if (grad_student)
                grad_student->at(i, c) = (dv > 0.0 ? 1.0 : (dv < 0.0 ? -1.0 : 0.0)) / count;
        }
    return total / count;
}

double rkd_loss(const Tensor& student_feats, const Tensor& teacher_feats,
                Tensor* grad_student) {
    if (student_feats.rows() != teacher_feats.rows())
        throw std::invalid_argument("rkd_loss: batch mismatch");
    if (grad_student) *grad_student = Tensor(student_feats.shape, 0.0);
    const std::size_t n = student_feats.rows();
    if (n < 2) return 0.0;
    const std::size_t d = student_feats.cols();
    const double pairs = static_cast<double>(n * (n - 1) / 2);
    std::vector<double> snorm(n);
    for (std::size_t i = 0; i < n; ++i) snorm[i] = norm2(tensor_row(student_feats, i));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const std::vector<double> si = tensor_row(student_feats, i);
            const std::vector<double> sj = tensor_row(student_feats, j);
            const double cs = cosine(si, sj);
            const double ct = cosine(tensor_row(teacher_feats, i), tensor_row(teacher_feats, j));
            const double dv = cs - ct;
            total += dv * dv;
            if (grad_student) {
                const double g = 2.0 * dv / pairs;
                for (std::size_t k = 0; k < d; ++k) {
                    grad_student->at(i, k) +=
                        g * (sj[k] / (snorm[i] * snorm[j]) - cs * si[k] / (snorm[i] * snorm[i]));
                    grad_student->at(j, k) +=
                        g * (si[k] / (snorm[i] * snorm[j]) - cs * sj[k] / (snorm[j] * snorm[j]));
                }
            }
        }
    return total / pairs;
}

double ft_loss(const Tensor& logits, const std::vector<int>& labels, Tensor* grad) {
    return cross_entropy(logits, labels, 0, logits.cols(), grad);
}

double tkd_loss(const Tensor& old_anchors, const Tensor& current_anchors, Tensor* grad_current) {
    if (old_anchors.rows() != current_anchors.rows() ||
        old_anchors.cols() != current_anchors.cols())
        throw std::invalid_argument("tkd_loss: anchor sets do not match");
    if (grad_current) *grad_current = Tensor(current_anchors.shape, 0.0);
    const double count = static_cast<double>(current_anchors.numel());
    if (count == 0.0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < current_anchors.numel(); ++i) {
        const double dv = current_anchors.data[i] - old_anchors.data[i];
        total += std::abs(dv);
        if (grad_current)
            grad_current->data[i] = (dv > 0.0 ? 1.0 : (dv < 0.0 ? -1.0 : 0.0)) / count;
    }
    return total / count;
}

double tft_loss(const Tensor& features, const Tensor& anchors, double tau,
                const std::vector<int>& labels, Tensor* grad_anchors) {
    ClassificationHead head;
    head.mode = HeadMode::anchor;
    head.anchors = anchors;
    head.tau = tau;
    Tensor logits = head_logits(head, features);
    Tensor glogits;
    const double loss = cross_entropy(logits, labels, 0, anchors.rows(),
                                      grad_anchors ? &glogits : nullptr);
    if (grad_anchors) {
        *grad_anchors = Tensor(anchors.shape, 0.0);
        const std::size_t n = features.rows();
        const std::size_t d = anchors.cols();
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double> f = tensor_row(features, i);
            const double nf = norm2(f);
            for (std::size_t c = 0; c < anchors.rows(); ++c) {
                const double g = glogits.at(i, c);
                if (g == 0.0) continue;
                const std::vector<double> a = tensor_row(anchors, c);
                const double na = norm2(a);
                const double cs = dot(a, f) / (na * nf);
                for (std::size_t k = 0; k < d; ++k)
                    grad_anchors->at(c, k) +=
                        g * tau * (f[k] / (na * nf) - cs * a[k] / (na * na));
            }
        }
    }
    return loss;
}

// Class models ---------------------------------------------------------------

namespace {

Tensor batch_from_rows(const std::vector<std::vector<double>>& xs,
                       const std::vector<std::size_t>& idx) {
    Tensor b = Tensor::matrix(idx.size(), xs.front().size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) b.at(i, j) = xs[idx[i]][j];
    return b;
}

std::vector<std::vector<double>> backbone_features(const Network& net,
                                                   const std::vector<std::vector<double>>& xs) {
    std::vector<std::vector<double>> out;
    if (xs.empty()) return out;
    std::vector<std::size_t> all(xs.size());
    std::iota(all.begin(), all.end(), 0);
    ForwardCache cache = forward_collect(net, batch_from_rows(xs, all));
    for (std::size_t i = 0; i < xs.size(); ++i)
        out.push_back(tensor_row(cache.outputs.back(), i));
    return out;
}

}  // namespace

void fit_class_models(const Network& net, const std::vector<std::vector<double>>& xs,
                      const std::vector<int>& ys, const std::vector<int>& classes,
                      ClassModels& models, const ReplayConfig& cfg, Rng& rng) {
    std::vector<std::vector<double>> feats = backbone_features(net, xs);
    for (int c : classes) {
        std::vector<std::vector<double>> class_feats;
        for (std::size_t i = 0; i < ys.size(); ++i)
            if (ys[i] == c) class_feats.push_back(feats[i]);
        models.gaussians[c] = fit_class_gaussian(class_feats, c);
        if (cfg.use_cfs && class_feats.size() >= 8) {
            models.contrastive[c] =
                train_contrastive(class_feats, cfg.contrastive_epochs, cfg.contrastive_lr,
                                  std::min<std::size_t>(16, class_feats.size()), rng,
                                  cfg.contrastive_hidden, cfg.cfs_temperature);
        }
    }
}

SyntheticBuffer build_replay_buffer(const Network& teacher, const ClassModels& models,
                                    const std::vector<int>& old_classes, std::size_t task_index,
                                    const ReplayConfig& cfg, HeadMode mode, Rng& rng,
                                    InversionTrace* trace) {
    if (task_index < 1)
        throw std::invalid_argument("build_replay_buffer: needs at least one completed task");
    for (std::size_t l = 0; l < teacher.stats.size(); ++l)
        if (teacher.stats[l].empty())
            throw std::runtime_error("build_replay_buffer: missing statistics for layer " +
                                     std::to_string(l));

    // Growth policy: linear a*t+b total (split evenly) or per-class quota.
    std::size_t total = 0;
    if (mode == HeadMode::linear)
        total = cfg.growth_a * task_index + cfg.growth_b;
    else
        total = cfg.per_class_quota * old_classes.size();

    SyntheticBuffer buffer;
    if (total == 0 || old_classes.empty()) return buffer;
    const std::size_t base = total / old_classes.size();

    struct ClassJob {
        int label;
        std::size_t quota;
        std::vector<SyntheticBuffer::Entry> entries;
        InversionTrace trace;
        std::exception_ptr error;
    };
    std::vector<ClassJob> jobs;
    for (std::size_t k = 0; k < old_classes.size(); ++k)
        jobs.push_back({old_classes[k],
                        base + (k < total % old_classes.size() ? 1 : 0),
                        {}, {}, nullptr});

    // One seed sub-stream per class, so results do not depend on the worker
    // count or class interleaving.
    const std::uint64_t root = rng.engine()();
    auto run_job = [&](ClassJob& job) {
        try {
            if (job.quota == 0) return;
            // separate streams so the inversion path draws the same noise
            // whether features came from plain sampling or selection
            Rng feat_rng =
                Rng::substream(root, "class-" + std::to_string(job.label) + "-features");
            Rng inv_rng =
                Rng::substream(root, "class-" + std::to_string(job.label) + "-invert");
            auto git = models.gaussians.find(job.label);
            if (git == models.gaussians.end())
                throw std::runtime_error("build_replay_buffer: no feature model for class " +
                                         std::to_string(job.label));
            const ClassGaussian& gauss = git->second;

            // Inversion needs a batch of >= 2 for the KL terms.
            const std::size_t n = std::max<std::size_t>(2, job.quota);
            std::vector<std::vector<double>> feats;
            auto mit = models.contrastive.find(job.label);
            if (cfg.use_cfs && mit != models.contrastive.end()) {
                const std::size_t keep = static_cast<std::size_t>(
                    std::ceil(cfg.cfs_keep_ratio * static_cast<double>(cfg.cfs_candidates)));
                const std::size_t k0 = cfg.cfs_init_size > 0 ? cfg.cfs_init_size : keep;
                std::size_t steps = cfg.cfs_steps;
                while (k0 + steps * keep < n) ++steps;  // ensure enough features
                FeatureSet set = cfs_select(gauss, mit->second, k0, steps, cfg.cfs_candidates,
                                            cfg.cfs_keep_ratio, cfg.cfs_temperature, feat_rng);
                feats.assign(set.features.begin(), set.features.begin() + n);
            } else {
                for (std::size_t i = 0; i < n; ++i) feats.push_back(gauss.sample(feat_rng));
            }

            Tensor targets = Tensor::matrix(n, gauss.dim());
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < gauss.dim(); ++j) targets.at(i, j) = feats[i][j];

            InversionTarget target = InversionTarget::for_features(targets);
            Tensor x = run_pmi(teacher, target, cfg.weights, cfg.pmi_steps, cfg.pmi_lr,
                               inv_rng, n, &job.trace, cfg.entry_layer);
            x = finetune_full(teacher, x, target, cfg.weights, cfg.full_steps, cfg.full_lr,
                              &job.trace, cfg.entry_layer);
            for (std::size_t i = 0; i < job.quota; ++i) {
                SyntheticBuffer::Entry e;
                e.x = tensor_row(x, i);
                e.label = job.label;
                e.target_feature = feats[i];
                e.created_at_task = task_index;
                job.entries.push_back(std::move(e));
            }
        } catch (...) {
            job.error = std::current_exception();
        }
    };

    const std::size_t workers = std::min(num_threads(), jobs.size());
    if (workers <= 1) {
        for (ClassJob& job : jobs) run_job(job);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
                    run_job(jobs[i]);
            });
        for (std::thread& th : pool) th.join();
    }

    for (ClassJob& job : jobs) {
        if (job.error) std::rethrow_exception(job.error);
        for (auto& e : job.entries) buffer.entries.push_back(std::move(e));
        if (trace)
            for (auto& r : job.trace.records) trace->add(std::move(r));
    }
    return buffer;
}

// Head growth ----------------------------------------------------------------

void extend_head_linear(Network& net, std::size_t new_classes, Rng& rng) {
    const std::size_t feat = net.feature_dim();
    const std::size_t old = net.head.weight.shape.empty() ? 0 : net.head.weight.shape[0];
    Tensor w = Tensor::matrix(old + new_classes, feat);
    Tensor b = Tensor({old + new_classes}, 0.0);
    for (std::size_t c = 0; c < old; ++c) {
        for (std::size_t j = 0; j < feat; ++j) w.at(c, j) = net.head.weight.at(c, j);
        b.data[c] = net.head.bias.data[c];
    }
    const double scale = std::sqrt(2.0 / static_cast<double>(feat + old + new_classes));
    for (std::size_t c = old; c < old + new_classes; ++c)
        for (std::size_t j = 0; j < feat; ++j) w.at(c, j) = rng.normal(0.0, scale);
    net.head.weight = std::move(w);
    net.head.bias = std::move(b);
}

void extend_head_anchor(Network& net, const std::vector<std::vector<double>>& anchors) {
    const std::size_t feat = net.feature_dim();
    const std::size_t old = net.head.anchors.shape.empty() ? 0 : net.head.anchors.shape[0];
    Tensor a = Tensor::matrix(old + anchors.size(), feat);
    for (std::size_t c = 0; c < old; ++c)
        for (std::size_t j = 0; j < feat; ++j) a.at(c, j) = net.head.anchors.at(c, j);
    for (std::size_t k = 0; k < anchors.size(); ++k) {
        const std::vector<double> v = normalized(anchors[k]);
        for (std::size_t j = 0; j < feat; ++j) a.at(old + k, j) = v[j];
    }
    net.head.anchors = std::move(a);
}

// Training -------------------------------------------------------------------

namespace {

struct NetOptimizer {
    std::vector<AdamState> weight, bias;
    AdamState head_weight, head_bias;

    NetOptimizer(const Network& net, double lr) {
        for (const auto& layer : net.layers) {
            weight.emplace_back(layer.weight.numel(), lr);
            bias.emplace_back(layer.bias.numel(), lr);
        }
        if (net.head.mode == HeadMode::linear) {
            head_weight = AdamState(net.head.weight.numel(), lr);
            head_bias = AdamState(net.head.bias.numel(), lr);
        } else {
            head_weight = AdamState(net.head.anchors.numel(), lr);
        }
    }

    void step(Network& net, const ParamGrads& g) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            adam_step(net.layers[l].weight.data, g.weight[l].data, weight[l]);
            adam_step(net.layers[l].bias.data, g.bias[l].data, bias[l]);
        }
        if (net.head.mode == HeadMode::linear) {
            adam_step(net.head.weight.data, g.head_weight.data, head_weight);
            adam_step(net.head.bias.data, g.head_bias.data, head_bias);
        } else {
            adam_step(net.head.anchors.data, g.head_weight.data, head_weight);
            // anchors stay on the unit sphere
            const std::size_t d = net.head.anchors.cols();
            for (std::size_t c = 0; c < net.head.anchors.rows(); ++c) {
                std::vector<double> a = tensor_row(net.head.anchors, c);
                a = normalized(a);
                for (std::size_t j = 0; j < d; ++j) net.head.anchors.at(c, j) = a[j];
            }
        }
    }
};

void scale_grads(Tensor& t, double s) {
    for (double& v : t.data) v *= s;
}

}  // namespace

void train_task(Network& net, const Task& task, std::size_t task_index,
                const SyntheticBuffer& buffer, const Network* teacher, const TrainConfig& cfg,
                Rng& rng) {
    if (task_index > 1 && teacher == nullptr)
        throw std::invalid_argument("train_task: teacher required for t > 1");
    if (task_index == 1 && !buffer.entries.empty())
        throw std::invalid_argument("train_task: buffer must be empty for the first task");

    const std::size_t hi = net.head.num_classes();
    const std::size_t lo = hi - task.classes.size();
    const CLLossWeights& w = cfg.loss_weights;
    double lambda_hkd = w.lambda_hkd;
    double lambda_rkd = w.lambda_rkd;
    if (w.scale_by_class_ratio && lo > 0) {
        const double scale =
            std::sqrt(static_cast<double>(lo) / static_cast<double>(task.classes.size()));
        lambda_hkd *= scale;
        lambda_rkd *= scale;
    }

    NetOptimizer opt(net, cfg.lr);
    const bool replaying = task_index > 1 && !buffer.entries.empty();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> perm = rng.permutation(task.train_x.size());
        for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, perm.size());
            std::vector<std::size_t> idx(perm.begin() + start, perm.begin() + end);
            Tensor xb = batch_from_rows(task.train_x, idx);
            std::vector<int> yb;
            for (std::size_t i : idx) yb.push_back(task.train_y[i]);

            ParamGrads grads = zero_param_grads(net);

            // Local cross-entropy on the current task's classes.
            ForwardCache cache = forward_collect(net, xb);
            Tensor glogits;
            cross_entropy(cache.logits, yb, lo, hi, &glogits);
            accumulate_param_grads(net, cache, glogits, grads);

            Tensor replay_x;
            std::vector<int> replay_y;
            ForwardCache replay_cache;
            if (replaying) {
                // One replay batch per step, drawn with replacement.
                const std::size_t m = std::min<std::size_t>(cfg.batch_size, buffer.size());
                replay_x = Tensor::matrix(m, net.input_dim());
                for (std::size_t i = 0; i < m; ++i) {
                    const auto& e = buffer.entries[rng.index(buffer.size())];
                    for (std::size_t j = 0; j < net.input_dim(); ++j)
                        replay_x.at(i, j) = e.x[j];
                    replay_y.push_back(e.label);
                }
                replay_cache = forward_collect(net, replay_x);
                ForwardCache teacher_cache = forward_collect(*teacher, replay_x);

                if (lambda_hkd > 0.0) {
                    Tensor ghkd;
                    hkd_loss(replay_cache.logits, teacher_cache.logits, lo, &ghkd);
                    // teacher logits may cover fewer classes; hkd_loss already
                    // restricts to the old range
                    scale_grads(ghkd, lambda_hkd);
                    accumulate_param_grads(net, replay_cache, ghkd, grads);
                }
                if (lambda_rkd > 0.0 && replay_x.rows() >= 2 &&
                    cfg.mode == HeadMode::linear) {
                    Tensor grkd;
                    rkd_loss(replay_cache.outputs.back(), teacher_cache.outputs.back(), &grkd);
                    scale_grads(grkd, lambda_rkd);
                    accumulate_param_grads_from_feature(net, replay_cache, grkd, grads);
                }
            }

            if (cfg.mode == HeadMode::linear && w.lambda_ft > 0.0 && lo > 0) {
                // Head-only fine-tuning CE over all seen classes on the mixed batch.
                Tensor mixed = Tensor::matrix(xb.rows() + replay_x.rows(), net.input_dim());
                std::vector<int> mixed_y = yb;
                for (std::size_t i = 0; i < xb.rows(); ++i)
                    for (std::size_t j = 0; j < net.input_dim(); ++j)
                        mixed.at(i, j) = xb.at(i, j);
                for (std::size_t i = 0; i < replay_x.rows(); ++i) {
                    for (std::size_t j = 0; j < net.input_dim(); ++j)
                        mixed.at(xb.rows() + i, j) = replay_x.at(i, j);
                    mixed_y.push_back(replay_y[i]);
                }
                ForwardCache mixed_cache = forward_collect(net, mixed);
                Tensor gft;
                ft_loss(mixed_cache.logits, mixed_y, &gft);
                scale_grads(gft, w.lambda_ft);
                accumulate_param_grads(net, mixed_cache, gft, grads, /*head_only=*/true);
            }

            if (cfg.mode == HeadMode::anchor && replaying) {
                if (w.lambda_tkd > 0.0) {
                    // Distill anchors of the old classes toward the teacher's.
                    Tensor old_cur = Tensor::matrix(lo, net.head.anchors.cols());
                    Tensor old_teach = Tensor::matrix(lo, net.head.anchors.cols());
                    for (std::size_t c = 0; c < lo; ++c)
                        for (std::size_t j = 0; j < net.head.anchors.cols(); ++j) {
                            old_cur.at(c, j) = net.head.anchors.at(c, j);
                            old_teach.at(c, j) = teacher->head.anchors.at(c, j);
                        }
                    Tensor gtkd;
                    tkd_loss(old_teach, old_cur, &gtkd);
                    for (std::size_t c = 0; c < lo; ++c)
                        for (std::size_t j = 0; j < net.head.anchors.cols(); ++j)
                            grads.head_weight.at(c, j) += w.lambda_tkd * gtkd.at(c, j);
                }
                if (w.lambda_tft > 0.0) {
                    Tensor gtft;
                    tft_loss(replay_cache.outputs.back(), net.head.anchors, net.head.tau,
                             replay_y, &gtft);
                    for (std::size_t i = 0; i < gtft.numel(); ++i)
                        grads.head_weight.data[i] += w.lambda_tft * gtft.data[i];
                }
            }

            opt.step(net, grads);
        }
    }
}

void refresh_old_class_models(const Network& net, const SyntheticBuffer& buffer,
                              ClassModels& models, const ReplayConfig& cfg, HeadMode mode,
                              Rng& rng) {
    if (mode == HeadMode::anchor) return;  // feature statistics assumed stable
    if (buffer.entries.empty())
        throw std::invalid_argument("refresh_old_class_models: empty buffer");
    std::vector<std::vector<double>> xs;
    for (const auto& e : buffer.entries) xs.push_back(e.x);
    std::vector<std::vector<double>> feats = backbone_features(net, xs);

    std::vector<int> classes;
    for (const auto& [c, g] : models.gaussians) classes.push_back(c);
    for (int c : classes) {
        std::vector<std::vector<double>> class_feats;
        for (std::size_t i = 0; i < buffer.entries.size(); ++i)
            if (buffer.entries[i].label == c) class_feats.push_back(feats[i]);
        if (class_feats.size() < 2) {
            std::cerr << "warning: class " << c
                      << " has fewer than 2 buffer entries, keeping previous Gaussian\n";
            continue;
        }
        models.gaussians[c] = fit_class_gaussian(class_feats, c);
        if (cfg.use_cfs && class_feats.size() >= 8)
            models.contrastive[c] =
                train_contrastive(class_feats, cfg.contrastive_epochs, cfg.contrastive_lr,
                                  std::min<std::size_t>(16, class_feats.size()), rng,
                                  cfg.contrastive_hidden, cfg.cfs_temperature);
    }
}

EvalRow evaluate(const Network& net, const TaskSequence& seq, std::size_t up_to_task) {
    const std::size_t seen = seq.classes_up_to(up_to_task);
    EvalRow row;
    std::size_t correct_total = 0, count_total = 0;
    for (std::size_t t = 0; t < up_to_task; ++t) {
        const Task& task = seq.tasks[t];
        std::vector<std::size_t> all(task.test_x.size());
        std::iota(all.begin(), all.end(), 0);
        ForwardCache cache = forward_collect(net, batch_from_rows(task.test_x, all));
        std::size_t correct = 0;
        for (std::size_t i = 0; i < task.test_x.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < seen; ++c)
                if (cache.logits.at(i, c) > cache.logits.at(i, best)) best = c;
            if (static_cast<int>(best) == task.test_y[i]) ++correct;
        }
        row.per_task.push_back(static_cast<double>(correct) /
                               static_cast<double>(task.test_x.size()));
        correct_total += correct;
        count_total += task.test_x.size();
    }
    row.average = count_total ? static_cast<double>(correct_total) /
                                    static_cast<double>(count_total)
                              : 0.0;
    return row;
}

double Metrics::average_incremental() const {
    if (stage_average.empty()) return 0.0;
    double s = 0.0;
    for (double v : stage_average) s += v;
    return s / static_cast<double>(stage_average.size());
}

void write_metrics_csv(const Metrics& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open metrics file " + path);
    f << "stage,task_id,accuracy\n";
    f.precision(17);
    for (std::size_t s = 0; s < m.per_task.size(); ++s)
        for (std::size_t t = 0; t < m.per_task[s].size(); ++t)
            f << (s + 1) << ',' << (t + 1) << ',' << m.per_task[s][t] << '\n';
    f << "summary,final_avg," << m.final_average() << '\n';
    f << "summary,avg_incremental," << m.average_incremental() << '\n';
}

}  // namespace invercl
