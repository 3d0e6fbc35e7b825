#pragma once

// Deterministic synthetic task sequences. Every class owns a random
// prototype image; a sample is prototype_scale * prototype + noise * N(0, 1).
// Task-incremental tasks partition the classes; domain-incremental tasks all
// use every class and differ by a per-domain input transform.

#include <cstdint>
#include <span>
#include <vector>

#include "subnetcl/tensor.hpp"

namespace subnetcl::datasets {

enum class DomainTransform { shift, rotation, permutation };

std::string_view to_string(DomainTransform transform);
DomainTransform parse_domain_transform(std::string_view text);

struct Dataset {
    Tensor inputs;  // {N, C, H, W}
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool operator==(const Dataset&) const = default;
};

struct TaskData {
    std::size_t task_id = 0;
    // Global class ids covered by this task; labels are local indices into it.
    std::vector<int> classes;
    Dataset train;
    Dataset val;
    Dataset test;
};

struct TaskSequenceSpec {
    Scenario scenario = Scenario::task_incremental;
    std::size_t num_tasks = 5;
    // Total classes; task-incremental tasks receive num_classes / num_tasks each.
    std::size_t num_classes = 10;
    std::size_t train_samples = 1000;  // includes the validation split
    std::size_t test_samples = 400;
    double val_fraction = 0.1;
    std::size_t channels = 3;
    std::size_t height = 8;
    std::size_t width = 8;
    double prototype_scale = 0.35;
    double noise = 1.0;
    DomainTransform transform = DomainTransform::shift;
    // Added to every input value, multiplied by the domain index.
    double domain_shift = 2.5;
    std::uint64_t seed = 7;

    std::size_t classes_per_task() const;
    void validate() const;
};

std::vector<TaskData> build_sequence(const TaskSequenceSpec& spec);

// All classes, untransformed (domain 0), from the same generator as build_sequence.
TaskData build_base_task(const TaskSequenceSpec& spec);

// Shuffled index batches for one epoch; the last partial batch is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch);

Dataset gather(const Dataset& data, std::span<const std::size_t> indices);
// Contiguous slice [begin, begin + count).
Dataset slice(const Dataset& data, std::size_t begin, std::size_t count);

// Applies domain `domain`'s transform to a {N, C, H, W} tensor in place.
void apply_domain_transform(Tensor& inputs, const TaskSequenceSpec& spec, std::size_t domain);

}  // namespace subnetcl::datasets
