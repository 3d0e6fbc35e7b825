#pragma once

// Sequential task training with per-task binary subnetworks.
//
// During task t every forward pass uses the candidate mask selected from the
// live scores. Weights owned by earlier tasks (cumulative mask = 1) receive no
// update and no optimizer moment state. After the first task the freeze
// policy pins normalization state and biases, and in the domain-incremental
// scenario the shared classifier head.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "subnetcl/backbone.hpp"
#include "subnetcl/datasets.hpp"
#include "subnetcl/maskstore.hpp"
#include "subnetcl/subnet.hpp"
#include "subnetcl/taskid.hpp"

namespace subnetcl::trainer {

struct SchedulerConfig {
    double factor = 0.3;
    std::size_t patience = 5;
    double min_lr = 1e-5;
    // An epoch counts as an improvement only if accuracy exceeds best + threshold.
    double threshold = 1e-4;
};

// Reduce-on-plateau driven by validation accuracy (higher is better).
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, SchedulerConfig config);

    // Call once per epoch; returns the learning rate for the next epoch.
    double step(double validation_accuracy);

    double lr() const { return lr_; }
    std::size_t bad_epochs() const { return bad_epochs_; }

private:
    SchedulerConfig config_;
    double lr_;
    double best_;
    bool has_best_ = false;
    std::size_t bad_epochs_ = 0;
};

struct AdamMoments {
    std::vector<double> first;
    std::vector<double> second;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// One Adam update at 1-based step `step`. Positions with frozen[i] != 0 keep
// both the parameter and its moments untouched.
void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& moments, double lr,
                 std::uint64_t step, const AdamConfig& config = {}, const LayerMask* frozen = nullptr);

struct TrainConfig {
    Scenario scenario = Scenario::task_incremental;
    double weight_lr = 3e-3;
    subnet::SelectionConfig selection;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    SchedulerConfig scheduler;
    std::uint64_t seed = 7;
    // After task 0: freeze normalization layers and maskable-layer biases.
    bool freeze_norm = true;
    // After task 0, domain-incremental only: freeze the shared classifier head.
    bool freeze_head = true;
    std::size_t stats_chunk = 64;

    // Optimizer, schedule and sparsity from the original competition setup.
    static TrainConfig paper_preset(Scenario scenario);
    // Scaled-down values for small synthetic runs on a CPU.
    static TrainConfig desk_preset(Scenario scenario);

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

// Bit-equality checks taken around one task's training.
struct FrozenAudit {
    bool normalization_checked = false;
    bool normalization_unchanged = true;
    bool biases_checked = false;
    bool biases_unchanged = true;
    bool prior_weights_unchanged = true;
    bool head_checked = false;
    bool head_unchanged = true;
    // Positions with M_{t-1} = 0 whose weights changed (diagnostic).
    std::size_t free_weights_changed = 0;

    bool passed() const;
    std::string describe() const;
};

struct TaskResult {
    std::size_t task_id = 0;
    MaskSet masks;
    std::vector<EpochMetrics> epochs;
    taskid::TaskStatistics statistics;
    FrozenAudit audit;
};

// Selects m_t from the final scores and returns (m_t, M_{t-1} OR m_t).
std::pair<MaskSet, subnet::CumulativeMask> finalize_task(const ScoreSet& scores,
                                                         const subnet::CumulativeMask& history,
                                                         const subnet::SelectionConfig& selection);

// Inference-mode predictions in chunks.
std::vector<int> predict(const Backbone& model, const datasets::Dataset& data, const MaskSet& masks, std::size_t head,
                         std::size_t chunk = 256);
double accuracy_percent(std::span<const int> predictions, std::span<const int> labels);

class ContinualLearner {
public:
    ContinualLearner(BackboneConfig backbone, TrainConfig config);

    // Rebuilds a learner from persisted state (tasks_done = masks.task_count()).
    ContinualLearner(TrainConfig config, Backbone model, ScoreSet scores, maskstore::CompressedMaskBank masks,
                     taskid::TaskStatisticsBank statistics);

    TaskResult train_task(const datasets::TaskData& task);

    std::size_t tasks_done() const { return masks_.task_count(); }
    const Backbone& model() const { return model_; }
    const TrainConfig& config() const { return config_; }
    const ScoreSet& scores() const { return scores_; }
    const subnet::CumulativeMask& history() const { return history_; }
    const maskstore::CompressedMaskBank& masks() const { return masks_; }
    const taskid::TaskStatisticsBank& statistics() const { return statistics_; }

    MaskSet task_masks(std::size_t task) const { return masks_.extract(task); }
    std::vector<LayerMask> first_layer_masks() const;
    std::size_t head_for(std::size_t task) const;

private:
    TrainConfig config_;
    Backbone model_;
    ScoreSet scores_;
    subnet::CumulativeMask history_;
    maskstore::CompressedMaskBank masks_;
    taskid::TaskStatisticsBank statistics_;
};

// Deterministic per-purpose seed derivation.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0);

}  // namespace subnetcl::trainer
