#include "subnetcl/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace subnetcl::trainer {

namespace {

enum SeedPurpose : std::uint64_t {
    kModelInit = 1,
    kBatchOrder = 2,
};

bool equal_at(const std::vector<double>& a, const std::vector<double>& b, const LayerMask& where)
{
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (where[i] != 0 && std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) {
            return false;
        }
    }
    return true;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) {
            return false;
        }
    }
    return true;
}

bool norm_bit_equal(const NormalizationState& a, const NormalizationState& b)
{
    return bit_equal(a.running_mean, b.running_mean) && bit_equal(a.running_var, b.running_var)
           && bit_equal(a.scale, b.scale) && bit_equal(a.shift, b.shift) && a.frozen == b.frozen;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index)
{
    // splitmix64 finaliser over a mixed key.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (purpose + 1) + 0xBF58476D1CE4E5B9ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

PlateauScheduler::PlateauScheduler(double initial_lr, SchedulerConfig config)
    : config_(config), lr_(initial_lr), best_(-std::numeric_limits<double>::infinity())
{
}

double PlateauScheduler::step(double validation_accuracy)
{
    if (!has_best_ || validation_accuracy > best_ + config_.threshold) {
        best_ = validation_accuracy;
        has_best_ = true;
        bad_epochs_ = 0;
        return lr_;
    }
    ++bad_epochs_;
    if (bad_epochs_ >= config_.patience) {
        lr_ = std::max(lr_ * config_.factor, config_.min_lr);
        bad_epochs_ = 0;
    }
    return lr_;
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& moments, double lr,
                 std::uint64_t step, const AdamConfig& config, const LayerMask* frozen)
{
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_update: parameter/gradient size mismatch");
    }
    if (moments.first.size() != params.size()) {
        moments.first.assign(params.size(), 0.0);
        moments.second.assign(params.size(), 0.0);
    }
    const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (frozen != nullptr && (*frozen)[i] != 0) {
            continue;
        }
        const double g = grads[i];
        moments.first[i] = config.beta1 * moments.first[i] + (1.0 - config.beta1) * g;
        moments.second[i] = config.beta2 * moments.second[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = moments.first[i] / correction1;
        const double v_hat = moments.second[i] / correction2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
}

TrainConfig TrainConfig::paper_preset(Scenario scenario)
{
    TrainConfig config;
    config.scenario = scenario;
    config.scheduler = SchedulerConfig{0.3, 5, 1e-5, 1e-4};
    if (scenario == Scenario::task_incremental) {
        config.weight_lr = 5e-5;
        config.batch_size = 32;
        config.epochs = 100;
        config.selection.sparsity = 0.4;
    } else {
        config.weight_lr = 3e-4;
        config.batch_size = 48;
        config.epochs = 80;
        config.selection.sparsity = 0.85;
    }
    return config;
}

TrainConfig TrainConfig::desk_preset(Scenario scenario)
{
    TrainConfig config = paper_preset(scenario);
    config.weight_lr = 3e-3;
    config.epochs = 10;
    config.selection.eta = 1.0;
    return config;
}

void TrainConfig::validate() const
{
    selection.validate();
    if (!(weight_lr > 0.0)) {
        throw std::invalid_argument("weight learning rate must be positive");
    }
    if (batch_size == 0 || epochs == 0) {
        throw std::invalid_argument("batch size and epochs must be positive");
    }
    if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0) || scheduler.patience == 0 || scheduler.min_lr < 0.0) {
        throw std::invalid_argument("scheduler needs factor in (0,1), positive patience, nonnegative min_lr");
    }
}

bool FrozenAudit::passed() const
{
    return prior_weights_unchanged && (!normalization_checked || normalization_unchanged)
           && (!biases_checked || biases_unchanged) && (!head_checked || head_unchanged);
}

std::string FrozenAudit::describe() const
{
    auto verdict = [](bool checked, bool ok) -> std::string {
        if (!checked) {
            return "not-frozen";
        }
        return ok ? "unchanged" : "CHANGED";
    };
    return "prior_weights=" + std::string(prior_weights_unchanged ? "unchanged" : "CHANGED")
           + " normalization=" + verdict(normalization_checked, normalization_unchanged)
           + " biases=" + verdict(biases_checked, biases_unchanged) + " head=" + verdict(head_checked, head_unchanged);
}

std::pair<MaskSet, subnet::CumulativeMask> finalize_task(const ScoreSet& scores,
                                                         const subnet::CumulativeMask& history,
                                                         const subnet::SelectionConfig& selection)
{
    MaskSet mask = subnet::select_masks(scores, selection);
    subnet::CumulativeMask merged = history.merged(mask);
    return {std::move(mask), std::move(merged)};
}

std::vector<int> predict(const Backbone& model, const datasets::Dataset& data, const MaskSet& masks, std::size_t head,
                         std::size_t chunk)
{
    std::vector<int> out;
    out.reserve(data.size());
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t count = std::min(chunk, data.size() - start);
        const auto part = datasets::slice(data, start, count);
        const auto labels = argmax_rows(model.forward_masked(part.inputs, masks, head));
        out.insert(out.end(), labels.begin(), labels.end());
    }
    return out;
}

double accuracy_percent(std::span<const int> predictions, std::span<const int> labels)
{
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("prediction/label count mismatch");
    }
    if (labels.empty()) {
        return 0.0;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i] == labels[i]) {
            ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

ContinualLearner::ContinualLearner(BackboneConfig backbone, TrainConfig config)
    : config_(std::move(config)), model_(std::move(backbone), derive_seed(config_.seed, kModelInit))
{
    config_.validate();
    if (model_.config().scenario != config_.scenario) {
        throw std::invalid_argument("backbone and trainer scenarios differ");
    }
    history_ = subnet::CumulativeMask(model_.mask_shapes());
    masks_ = maskstore::CompressedMaskBank(model_.mask_shapes());
}

ContinualLearner::ContinualLearner(TrainConfig config, Backbone model, ScoreSet scores,
                                   maskstore::CompressedMaskBank masks, taskid::TaskStatisticsBank statistics)
    : config_(std::move(config)),
      model_(std::move(model)),
      scores_(std::move(scores)),
      history_(model_.mask_shapes()),
      masks_(std::move(masks)),
      statistics_(std::move(statistics))
{
    config_.validate();
    if (masks_.layer_shapes() != model_.mask_shapes()) {
        throw std::invalid_argument("mask bank layer shapes do not match the model");
    }
    if (statistics_.size() != masks_.task_count()) {
        throw std::invalid_argument("statistics bank and mask bank disagree on task count");
    }
    for (std::size_t k = 0; k < masks_.task_count(); ++k) {
        history_ = history_.merged(masks_.extract(k));
    }
}

std::vector<LayerMask> ContinualLearner::first_layer_masks() const
{
    std::vector<LayerMask> out;
    for (std::size_t k = 0; k < masks_.task_count(); ++k) {
        out.push_back(masks_.extract_layer(k, 0));
    }
    return out;
}

std::size_t ContinualLearner::head_for(std::size_t task) const
{
    return config_.scenario == Scenario::task_incremental ? task : 0;
}

TaskResult ContinualLearner::train_task(const datasets::TaskData& task)
{
    const std::size_t t = tasks_done();
    if (task.task_id != t) {
        throw std::invalid_argument("out-of-order task: expected task " + std::to_string(t) + ", got "
                                    + std::to_string(task.task_id));
    }
    if (task.train.size() == 0) {
        throw std::invalid_argument("task " + std::to_string(t) + " has an empty training set");
    }
    const std::size_t head = head_for(t);
    if (head >= model_.head_count()) {
        throw std::invalid_argument("no classifier head for task " + std::to_string(t));
    }

    const Backbone before = model_;
    if (t == 0) {
        scores_ = subnet::magnitude_scores(model_);
    }
    const MaskSet prior = history_.layers();
    const std::size_t layer_count = model_.maskable_count();
    const bool update_biases = !model_.normalization_frozen();
    const bool update_norms = !model_.normalization_frozen();
    const bool update_head = !model_.head_frozen();

    std::vector<AdamMoments> weight_moments(layer_count);
    std::vector<AdamMoments> bias_moments(layer_count);
    std::vector<AdamMoments> scale_moments(model_.norm_count());
    std::vector<AdamMoments> shift_moments(model_.norm_count());
    AdamMoments head_w_moments;
    AdamMoments head_b_moments;

    PlateauScheduler scheduler(config_.weight_lr, config_.scheduler);
    double lr = config_.weight_lr;
    std::uint64_t step = 0;
    const std::uint64_t order_seed = derive_seed(config_.seed, kBatchOrder, t);

    TaskResult result;
    result.task_id = t;
    ForwardCache cache;
    for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
        const double eta = config_.selection.eta * (lr / config_.weight_lr);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (const auto& idx : datasets::batch_indices(task.train.size(), config_.batch_size, order_seed, epoch)) {
            const auto batch = datasets::gather(task.train, idx);
            const MaskSet masks = subnet::select_masks(scores_, config_.selection);
            const Tensor logits = model_.train_forward(batch.inputs, masks, head, cache);
            const LossResult loss = cross_entropy(logits, batch.labels);
            const Gradients grads = model_.backward(cache, loss.grad_logits);
            loss_sum += loss.loss * static_cast<double>(batch.size());
            correct += loss.correct;
            ++step;

            for (std::size_t l = 0; l < layer_count; ++l) {
                const auto score_grad = subnet::score_gradient(model_, grads, l);
                subnet::score_update_inplace(scores_[l], score_grad, prior[l], masks[l], eta, config_.selection.gamma);

                std::vector<double> weight_grad(grads.masked_weight[l].size());
                for (std::size_t i = 0; i < weight_grad.size(); ++i) {
                    weight_grad[i] = masks[l][i] != 0 ? grads.masked_weight[l][i] : 0.0;
                }
                weight_grad = subnet::freeze_prior_weights(weight_grad, prior[l]);
                adam_update(model_.layer(l).weights, weight_grad, weight_moments[l], lr, step, {}, &prior[l]);
                if (update_biases) {
                    adam_update(model_.layer(l).bias, grads.bias[l], bias_moments[l], lr, step);
                }
            }
            if (update_norms) {
                for (std::size_t n = 0; n < model_.norm_count(); ++n) {
                    adam_update(model_.norm(n).scale, grads.norm_scale[n], scale_moments[n], lr, step);
                    adam_update(model_.norm(n).shift, grads.norm_shift[n], shift_moments[n], lr, step);
                }
            }
            if (update_head) {
                adam_update(model_.head(head).weights, grads.head_weights, head_w_moments, lr, step);
                adam_update(model_.head(head).bias, grads.head_bias, head_b_moments, lr, step);
            }
            for (const auto& s : scores_) {
                for (double v : s) {
                    if (!std::isfinite(v)) {
                        throw std::runtime_error("importance score became non-finite during task "
                                                 + std::to_string(t));
                    }
                }
            }
        }

        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.lr = lr;
        metrics.train_loss = loss_sum / static_cast<double>(task.train.size());
        metrics.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(task.train.size());
        const MaskSet current = subnet::select_masks(scores_, config_.selection);
        if (task.val.size() > 0) {
            metrics.val_accuracy = accuracy_percent(predict(model_, task.val, current, head), task.val.labels);
        } else {
            metrics.val_accuracy = metrics.train_accuracy;
        }
        lr = scheduler.step(metrics.val_accuracy);
        result.epochs.push_back(metrics);
    }

    auto [mask, merged] = finalize_task(scores_, history_, config_.selection);
    masks_.append(mask);
    history_ = std::move(merged);
    result.statistics = taskid::record_statistics(model_, task.train, mask.front(), t, config_.stats_chunk);
    statistics_.append(result.statistics);
    result.masks = std::move(mask);

    if (t == 0 && (config_.freeze_norm || config_.freeze_head)) {
        FreezePolicy policy;
        policy.normalization = config_.freeze_norm;
        policy.classifier_head = config_.freeze_head && config_.scenario == Scenario::domain_incremental;
        model_.set_frozen(policy);
    }

    FrozenAudit& audit = result.audit;
    for (std::size_t l = 0; l < layer_count; ++l) {
        if (!equal_at(before.layer(l).weights, model_.layer(l).weights, prior[l])) {
            audit.prior_weights_unchanged = false;
        }
        for (std::size_t i = 0; i < prior[l].size(); ++i) {
            if (prior[l][i] == 0 && before.layer(l).weights[i] != model_.layer(l).weights[i]) {
                ++audit.free_weights_changed;
            }
        }
    }
    if (t > 0 && before.normalization_frozen()) {
        audit.normalization_checked = true;
        audit.biases_checked = true;
        for (std::size_t n = 0; n < model_.norm_count(); ++n) {
            audit.normalization_unchanged =
                audit.normalization_unchanged && norm_bit_equal(before.norm(n), model_.norm(n));
        }
        for (std::size_t l = 0; l < layer_count; ++l) {
            audit.biases_unchanged = audit.biases_unchanged && bit_equal(before.layer(l).bias, model_.layer(l).bias);
        }
    }
    if (t > 0 && before.head_frozen()) {
        audit.head_checked = true;
        audit.head_unchanged = bit_equal(before.head(0).weights, model_.head(0).weights)
                               && bit_equal(before.head(0).bias, model_.head(0).bias);
    }
    return result;
}

}  // namespace subnetcl::trainer
