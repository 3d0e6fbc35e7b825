#pragma once

// Task identity from first-layer activation statistics. For every finished
// task the per-channel mean and variance of the first convolution's raw
// output over the task's training data are stored. An unlabeled sample is
// pushed through the first layer under each task's first-layer mask and
// assigned the task whose stored statistics are nearest.

#include <cstdint>
#include <span>
#include <vector>

#include "subnetcl/backbone.hpp"
#include "subnetcl/datasets.hpp"

namespace subnetcl::taskid {

struct TaskStatistics {
    std::size_t task_id = 0;
    std::vector<double> mean;
    std::vector<double> variance;
    std::uint64_t sample_count = 0;

    bool operator==(const TaskStatistics&) const = default;
};

// Per-channel one-pass moments (Welford / Chan merge).
class ChannelMoments {
public:
    explicit ChannelMoments(std::size_t channels);

    // activations: {N, C, H, W}; reduces over batch and spatial positions.
    void add(const Tensor& activations);

    std::size_t channels() const { return mean_.size(); }
    std::uint64_t count() const { return count_; }
    std::vector<double> mean() const { return mean_; }
    // Population variance.
    std::vector<double> variance() const;

private:
    std::vector<double> mean_;
    std::vector<double> m2_;
    std::uint64_t count_ = 0;
};

class TaskStatisticsBank {
public:
    TaskStatisticsBank() = default;

    // Requires stats.task_id == size().
    void append(TaskStatistics stats);
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t channels() const { return entries_.empty() ? 0 : entries_.front().mean.size(); }
    const TaskStatistics& at(std::size_t task) const { return entries_.at(task); }
    std::span<const TaskStatistics> entries() const { return entries_; }

    // Reals stored: 2 * channels * T.
    std::size_t stored_reals() const { return 2 * channels() * size(); }

    bool operator==(const TaskStatisticsBank&) const = default;

private:
    std::vector<TaskStatistics> entries_;
};

// Layout: T u64 | channels u64 | per task: mean f64[C], variance f64[C], sample_count u64.
std::vector<std::byte> serialize(const TaskStatisticsBank& bank);
TaskStatisticsBank deserialize(std::span<const std::byte> bytes);

enum class DistanceMode { per_channel, scalar };

struct DistanceConfig {
    DistanceMode mode = DistanceMode::per_channel;
    double mean_weight = 1.0;
    double variance_weight = 1.0;
};

// Streams the task's inputs through the first layer in chunks of `chunk` samples.
TaskStatistics record_statistics(const Backbone& model, const datasets::Dataset& data, const LayerMask& first_mask,
                                 std::size_t task_id, std::size_t chunk = 64);

// Per-sample statistics of one sample's activation slice {C, H, W}: mean and
// population variance over spatial positions for each channel.
void sample_statistics(const double* activations, std::size_t channels, std::size_t plane, std::vector<double>& mean,
                       std::vector<double>& variance);

double statistics_distance(std::span<const double> mean, std::span<const double> variance,
                           const TaskStatistics& reference, const DistanceConfig& config);

// sample: {1, C, H, W} or {C, H, W}. first_masks[k] is task k's first-layer mask.
std::size_t infer_task_id(const Backbone& model, const Tensor& sample, const TaskStatisticsBank& bank,
                          std::span<const LayerMask> first_masks, const DistanceConfig& config = {});

// Same result as calling infer_task_id per sample; one first-layer pass per task.
std::vector<std::size_t> infer_batch(const Backbone& model, const Tensor& batch, const TaskStatisticsBank& bank,
                                     std::span<const LayerMask> first_masks, const DistanceConfig& config = {});

}  // namespace subnetcl::taskid
