#include "subnetcl/taskid.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include "subnetcl/binio.hpp"

namespace subnetcl::taskid {

ChannelMoments::ChannelMoments(std::size_t channels) : mean_(channels, 0.0), m2_(channels, 0.0) {}

void ChannelMoments::add(const Tensor& activations)
{
    const std::size_t n_batch = activations.dim(0);
    const std::size_t channels = activations.dim(1);
    if (channels != mean_.size()) {
        throw std::invalid_argument("activation channel count does not match accumulator");
    }
    const std::size_t plane = activations.size() / (n_batch * channels);
    // Per chunk: exact two-pass moments, then Chan's merge into the running totals.
    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
            const double* src = activations.data() + (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum += src[i];
            }
        }
        const auto chunk_count = static_cast<double>(n_batch * plane);
        const double chunk_mean = sum / chunk_count;
        double chunk_m2 = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
            const double* src = activations.data() + (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = src[i] - chunk_mean;
                chunk_m2 += d * d;
            }
        }
        const auto prior = static_cast<double>(count_);
        const double total = prior + chunk_count;
        const double delta = chunk_mean - mean_[c];
        mean_[c] += delta * chunk_count / total;
        m2_[c] += chunk_m2 + delta * delta * prior * chunk_count / total;
    }
    count_ += n_batch * plane;
}

std::vector<double> ChannelMoments::variance() const
{
    std::vector<double> out(m2_.size(), 0.0);
    if (count_ == 0) {
        return out;
    }
    for (std::size_t c = 0; c < out.size(); ++c) {
        out[c] = m2_[c] / static_cast<double>(count_);
    }
    return out;
}

void TaskStatisticsBank::append(TaskStatistics stats)
{
    if (stats.task_id != entries_.size()) {
        throw std::invalid_argument("statistics for task " + std::to_string(stats.task_id)
                                    + " appended out of order (expected " + std::to_string(entries_.size()) + ")");
    }
    if (stats.mean.size() != stats.variance.size()) {
        throw std::invalid_argument("statistics mean/variance length mismatch");
    }
    if (!entries_.empty() && stats.mean.size() != channels()) {
        throw std::invalid_argument("statistics channel count differs from earlier tasks");
    }
    if (stats.sample_count == 0) {
        throw std::invalid_argument("statistics need at least one sample");
    }
    entries_.push_back(std::move(stats));
}

std::vector<std::byte> serialize(const TaskStatisticsBank& bank)
{
    binio::ByteWriter out;
    out.put(static_cast<std::uint64_t>(bank.size()));
    out.put(static_cast<std::uint64_t>(bank.channels()));
    for (const auto& entry : bank.entries()) {
        for (double v : entry.mean) {
            out.put_f64(v);
        }
        for (double v : entry.variance) {
            out.put_f64(v);
        }
        out.put(entry.sample_count);
    }
    return out.take();
}

TaskStatisticsBank deserialize(std::span<const std::byte> bytes)
{
    binio::ByteReader in(bytes);
    const auto tasks = in.get<std::uint64_t>();
    const auto channels = in.get<std::uint64_t>();
    if (tasks > 0 && channels * tasks * 16 > in.remaining()) {
        throw binio::TruncatedError("truncated statistics bank");
    }
    TaskStatisticsBank bank;
    for (std::uint64_t t = 0; t < tasks; ++t) {
        TaskStatistics stats;
        stats.task_id = static_cast<std::size_t>(t);
        stats.mean.resize(channels);
        stats.variance.resize(channels);
        for (auto& v : stats.mean) {
            v = in.get_f64();
        }
        for (auto& v : stats.variance) {
            v = in.get_f64();
        }
        stats.sample_count = in.get<std::uint64_t>();
        bank.append(std::move(stats));
    }
    return bank;
}

TaskStatistics record_statistics(const Backbone& model, const datasets::Dataset& data, const LayerMask& first_mask,
                                 std::size_t task_id, std::size_t chunk)
{
    if (data.size() == 0) {
        throw std::invalid_argument("record_statistics: empty data stream");
    }
    if (chunk == 0) {
        chunk = 64;
    }
    const std::size_t channels = model.layer(0).out_features();
    ChannelMoments moments(channels);
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t count = std::min(chunk, data.size() - start);
        const auto part = datasets::slice(data, start, count);
        moments.add(model.tap_first_layer(part.inputs, first_mask));
    }
    TaskStatistics stats;
    stats.task_id = task_id;
    stats.mean = moments.mean();
    stats.variance = moments.variance();
    stats.sample_count = data.size();
    return stats;
}

void sample_statistics(const double* activations, std::size_t channels, std::size_t plane, std::vector<double>& mean,
                       std::vector<double>& variance)
{
    mean.assign(channels, 0.0);
    variance.assign(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = activations + c * plane;
        double sum = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            sum += src[i];
        }
        const double mu = sum / static_cast<double>(plane);
        double sq = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = src[i] - mu;
            sq += d * d;
        }
        mean[c] = mu;
        variance[c] = sq / static_cast<double>(plane);
    }
}

double statistics_distance(std::span<const double> mean, std::span<const double> variance,
                           const TaskStatistics& reference, const DistanceConfig& config)
{
    if (mean.size() != reference.mean.size() || variance.size() != reference.variance.size()) {
        throw std::invalid_argument("statistics channel count mismatch");
    }
    if (config.mode == DistanceMode::scalar) {
        double m = 0.0;
        double v = 0.0;
        double rm = 0.0;
        double rv = 0.0;
        for (std::size_t c = 0; c < mean.size(); ++c) {
            m += mean[c];
            v += variance[c];
            rm += reference.mean[c];
            rv += reference.variance[c];
        }
        const auto n = static_cast<double>(mean.size());
        const double dm = (m - rm) / n;
        const double dv = (v - rv) / n;
        return config.mean_weight * dm * dm + config.variance_weight * dv * dv;
    }
    double dm = 0.0;
    double dv = 0.0;
    for (std::size_t c = 0; c < mean.size(); ++c) {
        const double a = mean[c] - reference.mean[c];
        const double b = variance[c] - reference.variance[c];
        dm += a * a;
        dv += b * b;
    }
    return config.mean_weight * dm + config.variance_weight * dv;
}

namespace {

void check_bank(const TaskStatisticsBank& bank, std::span<const LayerMask> first_masks)
{
    if (bank.empty()) {
        throw std::invalid_argument("task-id inference needs a nonempty statistics bank");
    }
    if (first_masks.size() < bank.size()) {
        throw std::invalid_argument("task-id inference needs a first-layer mask for every task");
    }
}

}  // namespace

std::size_t infer_task_id(const Backbone& model, const Tensor& sample, const TaskStatisticsBank& bank,
                          std::span<const LayerMask> first_masks, const DistanceConfig& config)
{
    check_bank(bank, first_masks);
    Tensor input = sample;
    if (sample.rank() == 3) {
        input = Tensor({1, sample.dim(0), sample.dim(1), sample.dim(2)}, sample.storage());
    }
    if (input.dim(0) != 1) {
        throw std::invalid_argument("infer_task_id expects a single sample");
    }
    std::size_t best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    std::vector<double> mean;
    std::vector<double> variance;
    for (std::size_t k = 0; k < bank.size(); ++k) {
        const Tensor act = model.tap_first_layer(input, first_masks[k]);
        sample_statistics(act.data(), act.dim(1), act.dim(2) * act.dim(3), mean, variance);
        const double d = statistics_distance(mean, variance, bank.at(k), config);
        if (d < best_distance) {
            best_distance = d;
            best = k;
        }
    }
    return best;
}

std::vector<std::size_t> infer_batch(const Backbone& model, const Tensor& batch, const TaskStatisticsBank& bank,
                                     std::span<const LayerMask> first_masks, const DistanceConfig& config)
{
    check_bank(bank, first_masks);
    const std::size_t n_batch = batch.dim(0);
    std::vector<std::size_t> best(n_batch, 0);
    std::vector<double> best_distance(n_batch, std::numeric_limits<double>::infinity());
    std::vector<double> mean;
    std::vector<double> variance;
    for (std::size_t k = 0; k < bank.size(); ++k) {
        const Tensor act = model.tap_first_layer(batch, first_masks[k]);
        const std::size_t channels = act.dim(1);
        const std::size_t plane = act.dim(2) * act.dim(3);
        for (std::size_t n = 0; n < n_batch; ++n) {
            sample_statistics(act.data() + n * channels * plane, channels, plane, mean, variance);
            const double d = statistics_distance(mean, variance, bank.at(k), config);
            if (d < best_distance[n]) {
                best_distance[n] = d;
                best[n] = k;
            }
        }
    }
    return best;
}

}  // namespace subnetcl::taskid
