#include "subnetcl/subnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace subnetcl::subnet {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what)
{
    if (a != b) {
        throw std::invalid_argument(std::string(what) + ": size mismatch (" + std::to_string(a) + " vs "
                                    + std::to_string(b) + ")");
    }
}

}  // namespace

double SelectionConfig::alpha_for(std::size_t layer) const
{
    if (layer < layer_alpha.size()) {
        return layer_alpha[layer];
    }
    return alpha;
}

void SelectionConfig::validate() const
{
    if (!(sparsity > 0.0 && sparsity <= 1.0)) {
        throw std::invalid_argument("sparsity must be in (0, 1]");
    }
    auto check_alpha = [](double a) {
        if (!(a > 0.0 && a < 1.0)) {
            throw std::invalid_argument("alpha must be in (0, 1)");
        }
    };
    check_alpha(alpha);
    std::for_each(layer_alpha.begin(), layer_alpha.end(), check_alpha);
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("gamma must be positive");
    }
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw std::invalid_argument("score learning rate must be positive");
    }
}

std::size_t topk_count(std::size_t n, double sparsity)
{
    const double raw = std::floor(sparsity * static_cast<double>(n) + 0.5);
    return std::min(n, static_cast<std::size_t>(std::max(0.0, raw)));
}

double layer_threshold(std::span<const double> scores, double alpha)
{
    if (scores.empty()) {
        throw std::invalid_argument("layer_threshold: empty layer");
    }
    return alpha * *std::max_element(scores.begin(), scores.end());
}

LayerMask select_mask_threshold(std::span<const double> scores, double theta)
{
    LayerMask mask(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        mask[i] = scores[i] >= theta ? 1 : 0;
    }
    return mask;
}

LayerMask select_mask_topk(std::span<const double> scores, double sparsity)
{
    const std::size_t n = scores.size();
    const std::size_t keep = topk_count(n, sparsity);
    LayerMask mask(n, 0);
    if (keep == 0) {
        return mask;
    }
    if (keep == n) {
        std::fill(mask.begin(), mask.end(), std::uint8_t{1});
        return mask;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto before = [&scores](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return a < b;
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1), order.end(), before);
    for (std::size_t i = 0; i < keep; ++i) {
        mask[order[i]] = 1;
    }
    return mask;
}

LayerMask select_layer_mask(std::span<const double> scores, const SelectionConfig& config, std::size_t layer)
{
    if (config.mode == SelectionMode::fixed_sparsity) {
        return select_mask_topk(scores, config.sparsity);
    }
    const double alpha = config.alpha_for(layer);
    if (config.topk_fallback && *std::max_element(scores.begin(), scores.end()) <= 0.0) {
        return select_mask_topk(scores, alpha);
    }
    return select_mask_threshold(scores, layer_threshold(scores, alpha));
}

MaskSet select_masks(const ScoreSet& scores, const SelectionConfig& config)
{
    MaskSet masks;
    masks.reserve(scores.size());
    for (std::size_t l = 0; l < scores.size(); ++l) {
        masks.push_back(select_layer_mask(scores[l], config, l));
    }
    return masks;
}

std::vector<double> score_update(std::span<const double> scores, std::span<const double> grad,
                                 std::span<const std::uint8_t> prior, std::span<const std::uint8_t> current,
                                 double eta, double gamma)
{
    std::vector<double> out(scores.begin(), scores.end());
    score_update_inplace(out, grad, prior, current, eta, gamma);
    return out;
}

void score_update_inplace(std::span<double> scores, std::span<const double> grad,
                          std::span<const std::uint8_t> prior, std::span<const std::uint8_t> current, double eta,
                          double gamma)
{
    require_same_size(scores.size(), grad.size(), "score_update");
    require_same_size(scores.size(), prior.size(), "score_update");
    require_same_size(scores.size(), current.size(), "score_update");
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (prior[i] != 0 || current[i] == 0) {
            scores[i] -= eta * grad[i] * gamma;
        } else {
            scores[i] -= eta * grad[i];
        }
    }
}

std::vector<double> score_gradient(const Backbone& model, const Gradients& grads, std::size_t layer)
{
    if (!grads.valid) {
        throw std::logic_error("score_gradient: no backward pass has been executed");
    }
    const auto& weights = model.layer(layer).weights;
    const auto& dw = grads.masked_weight.at(layer);
    require_same_size(weights.size(), dw.size(), "score_gradient");
    std::vector<double> out(weights.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = dw[i] * weights[i];
    }
    return out;
}

std::vector<double> freeze_prior_weights(std::span<const double> grad_w, std::span<const std::uint8_t> prior)
{
    require_same_size(grad_w.size(), prior.size(), "freeze_prior_weights");
    std::vector<double> out(grad_w.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = prior[i] != 0 ? 0.0 : grad_w[i];
    }
    return out;
}

ScoreSet magnitude_scores(const Backbone& model)
{
    ScoreSet scores;
    for (const auto& layer : model.layers()) {
        std::vector<double> s(layer.weights.size());
        std::transform(layer.weights.begin(), layer.weights.end(), s.begin(), [](double w) { return std::abs(w); });
        scores.push_back(std::move(s));
    }
    return scores;
}

CumulativeMask::CumulativeMask(const std::vector<Shape>& shapes)
{
    for (const auto& shape : shapes) {
        layers_.emplace_back(element_count(shape), std::uint8_t{0});
    }
}

std::size_t CumulativeMask::ones() const
{
    std::size_t total = 0;
    for (const auto& layer : layers_) {
        total += ones_count(layer);
    }
    return total;
}

CumulativeMask CumulativeMask::merged(const MaskSet& task_mask) const
{
    require_same_size(layers_.size(), task_mask.size(), "cumulative mask layers");
    CumulativeMask out = *this;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        require_same_size(layers_[l].size(), task_mask[l].size(), "cumulative mask elements");
        for (std::size_t i = 0; i < layers_[l].size(); ++i) {
            out.layers_[l][i] = static_cast<std::uint8_t>(layers_[l][i] | task_mask[l][i]);
        }
    }
    return out;
}

std::size_t ones_count(const LayerMask& mask)
{
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }));
}

}  // namespace subnetcl::subnet
