#include "subnetcl/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace subnetcl::datasets {

namespace {

enum StreamTag : std::uint32_t {
    kPrototypes = 1,
    kTrainSamples = 2,
    kTestSamples = 3,
    kPermutation = 4,
    kBatchOrder = 5,
};

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag, std::uint64_t a, std::uint64_t b = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

std::size_t image_size(const TaskSequenceSpec& spec)
{
    return spec.channels * spec.height * spec.width;
}

std::vector<double> class_prototype(const TaskSequenceSpec& spec, int global_class)
{
    auto rng = stream(spec.seed, kPrototypes, static_cast<std::uint64_t>(global_class));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> proto(image_size(spec));
    for (double& v : proto) {
        v = normal(rng);
    }
    return proto;
}

Dataset generate(const TaskSequenceSpec& spec, std::span<const int> classes,
                 const std::vector<std::vector<double>>& prototypes, std::size_t count, std::uint32_t tag,
                 std::size_t task)
{
    auto rng = stream(spec.seed, tag, task);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset data;
    data.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        data.labels[i] = static_cast<int>(i % classes.size());
    }
    std::shuffle(data.labels.begin(), data.labels.end(), rng);

    const std::size_t pixels = image_size(spec);
    data.inputs = Tensor({count, spec.channels, spec.height, spec.width});
    for (std::size_t i = 0; i < count; ++i) {
        const auto& proto = prototypes[static_cast<std::size_t>(data.labels[i])];
        double* dst = data.inputs.data() + i * pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
            dst[p] = spec.prototype_scale * proto[p] + spec.noise * normal(rng);
        }
    }
    return data;
}

TaskData build_task(const TaskSequenceSpec& spec, std::size_t task, std::vector<int> classes, std::size_t domain)
{
    std::vector<std::vector<double>> prototypes;
    prototypes.reserve(classes.size());
    for (int c : classes) {
        prototypes.push_back(class_prototype(spec, c));
    }
    TaskData out;
    out.task_id = task;
    Dataset train = generate(spec, classes, prototypes, spec.train_samples, kTrainSamples, task);
    out.test = generate(spec, classes, prototypes, spec.test_samples, kTestSamples, task);
    apply_domain_transform(train.inputs, spec, domain);
    apply_domain_transform(out.test.inputs, spec, domain);

    const auto val_count = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(train.size())));
    out.train = slice(train, 0, train.size() - val_count);
    out.val = slice(train, train.size() - val_count, val_count);
    out.classes = std::move(classes);
    return out;
}

}  // namespace

std::string_view to_string(DomainTransform transform)
{
    switch (transform) {
    case DomainTransform::shift:
        return "shift";
    case DomainTransform::rotation:
        return "rotation";
    case DomainTransform::permutation:
        return "permutation";
    }
    return "shift";
}

DomainTransform parse_domain_transform(std::string_view text)
{
    if (text == "shift") {
        return DomainTransform::shift;
    }
    if (text == "rotation") {
        return DomainTransform::rotation;
    }
    if (text == "permutation") {
        return DomainTransform::permutation;
    }
    throw std::invalid_argument("unknown domain transform '" + std::string(text)
                                + "' (expected shift|rotation|permutation)");
}

std::size_t TaskSequenceSpec::classes_per_task() const
{
    return scenario == Scenario::task_incremental ? num_classes / num_tasks : num_classes;
}

void TaskSequenceSpec::validate() const
{
    if (num_tasks == 0) {
        throw std::invalid_argument("task sequence needs at least one task");
    }
    if (num_classes < 2) {
        throw std::invalid_argument("task sequence needs at least two classes");
    }
    if (scenario == Scenario::task_incremental) {
        if (num_classes % num_tasks != 0) {
            throw std::invalid_argument("num_classes " + std::to_string(num_classes) + " is not divisible by "
                                        + std::to_string(num_tasks) + " tasks");
        }
        if (num_classes / num_tasks < 2) {
            throw std::invalid_argument("task-incremental split leaves fewer than two classes per task");
        }
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw std::invalid_argument("val_fraction must be in [0, 1)");
    }
    if (train_samples < 2 || test_samples == 0) {
        throw std::invalid_argument("task sequence needs train and test samples");
    }
    if (channels == 0 || height == 0 || width == 0) {
        throw std::invalid_argument("input shape must be nonzero");
    }
    if (transform == DomainTransform::rotation && height != width) {
        throw std::invalid_argument("rotation transform needs square inputs");
    }
}

std::vector<TaskData> build_sequence(const TaskSequenceSpec& spec)
{
    spec.validate();
    std::vector<TaskData> tasks;
    const std::size_t per_task = spec.classes_per_task();
    for (std::size_t t = 0; t < spec.num_tasks; ++t) {
        std::vector<int> classes(per_task);
        const std::size_t first = spec.scenario == Scenario::task_incremental ? t * per_task : 0;
        std::iota(classes.begin(), classes.end(), static_cast<int>(first));
        const std::size_t domain = spec.scenario == Scenario::domain_incremental ? t : 0;
        tasks.push_back(build_task(spec, t, std::move(classes), domain));
    }
    return tasks;
}

TaskData build_base_task(const TaskSequenceSpec& spec)
{
    spec.validate();
    std::vector<int> classes(spec.num_classes);
    std::iota(classes.begin(), classes.end(), 0);
    return build_task(spec, 0, std::move(classes), 0);
}

void apply_domain_transform(Tensor& inputs, const TaskSequenceSpec& spec, std::size_t domain)
{
    if (domain == 0) {
        return;
    }
    const std::size_t n = inputs.dim(0);
    const std::size_t c = inputs.dim(1);
    const std::size_t h = inputs.dim(2);
    const std::size_t w = inputs.dim(3);
    switch (spec.transform) {
    case DomainTransform::shift: {
        const double offset = spec.domain_shift * static_cast<double>(domain);
        for (double& v : inputs.values()) {
            v += offset;
        }
        break;
    }
    case DomainTransform::rotation: {
        const std::size_t turns = domain % 4;
        Tensor out(inputs.shape());
        for (std::size_t plane = 0; plane < n * c; ++plane) {
            const double* src = inputs.data() + plane * h * w;
            double* dst = out.data() + plane * h * w;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    std::size_t ty = y;
                    std::size_t tx = x;
                    for (std::size_t r = 0; r < turns; ++r) {
                        const std::size_t ny = tx;
                        const std::size_t nx = h - 1 - ty;
                        ty = ny;
                        tx = nx;
                    }
                    dst[ty * w + tx] = src[y * w + x];
                }
            }
        }
        inputs = std::move(out);
        break;
    }
    case DomainTransform::permutation: {
        std::vector<std::size_t> perm(h * w);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        auto rng = stream(spec.seed, kPermutation, domain);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor out(inputs.shape());
        for (std::size_t plane = 0; plane < n * c; ++plane) {
            const double* src = inputs.data() + plane * h * w;
            double* dst = out.data() + plane * h * w;
            for (std::size_t p = 0; p < h * w; ++p) {
                dst[perm[p]] = src[p];
            }
        }
        inputs = std::move(out);
        break;
    }
    }
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::uint64_t epoch)
{
    if (batch_size == 0) {
        throw std::invalid_argument("batch size must be positive");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = stream(seed, kBatchOrder, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Dataset gather(const Dataset& data, std::span<const std::size_t> indices)
{
    const auto& shape = data.inputs.shape();
    const std::size_t row = data.inputs.size() / shape[0];
    Shape out_shape = shape;
    out_shape[0] = indices.size();
    std::vector<double> values(indices.size() * row);
    Dataset out;
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        std::copy_n(data.inputs.data() + src * row, row, values.data() + i * row);
        out.labels[i] = data.labels.at(src);
    }
    out.inputs = Tensor(std::move(out_shape), std::move(values));
    return out;
}

Dataset slice(const Dataset& data, std::size_t begin, std::size_t count)
{
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), begin);
    return gather(data, idx);
}

}  // namespace subnetcl::datasets
