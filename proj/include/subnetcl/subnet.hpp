#pragma once

// Importance scores, per-task mask selection and the score/weight update
// rules that keep earlier tasks' subnetworks untouched.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "subnetcl/backbone.hpp"
#include "subnetcl/tensor.hpp"

namespace subnetcl::subnet {

enum class SelectionMode { fixed_sparsity, dynamic_threshold };

struct SelectionConfig {
    SelectionMode mode = SelectionMode::fixed_sparsity;
    // Fraction of each layer kept in fixed-sparsity mode, in (0, 1].
    double sparsity = 0.4;
    // Threshold fraction of the layer's maximum score, in (0, 1).
    double alpha = 0.5;
    // Optional per-layer override of alpha; empty means alpha for every layer.
    std::vector<double> layer_alpha;
    // Score-gradient scale on positions used by earlier tasks or unselected now.
    double gamma = 1.5;
    // Score learning rate.
    double eta = 1.0;
    // With max(s) <= 0 the threshold rule degenerates; fall back to top-k with c = alpha.
    bool topk_fallback = true;

    double alpha_for(std::size_t layer) const;
    void validate() const;
};

// Number of ones kept by top-k: round-half-up(c * n).
std::size_t topk_count(std::size_t n, double sparsity);

double layer_threshold(std::span<const double> scores, double alpha);

// m_i = 1 iff s_i >= theta.
LayerMask select_mask_threshold(std::span<const double> scores, double theta);

// Exactly topk_count(n, c) ones at the largest scores; ties go to the lower flat index.
LayerMask select_mask_topk(std::span<const double> scores, double sparsity);

// Mask for one layer under the configured mode, including the degenerate fallback.
LayerMask select_layer_mask(std::span<const double> scores, const SelectionConfig& config, std::size_t layer);
MaskSet select_masks(const ScoreSet& scores, const SelectionConfig& config);

// s - eta*g*gamma where (prior = 1 or current = 0), s - eta*g elsewhere.
std::vector<double> score_update(std::span<const double> scores, std::span<const double> grad,
                                 std::span<const std::uint8_t> prior, std::span<const std::uint8_t> current,
                                 double eta, double gamma);
void score_update_inplace(std::span<double> scores, std::span<const double> grad,
                          std::span<const std::uint8_t> prior, std::span<const std::uint8_t> current, double eta,
                          double gamma);

// Straight-through score gradient: dL/dw' * w for the given maskable layer.
// Throws std::logic_error if no backward pass produced `grads`.
std::vector<double> score_gradient(const Backbone& model, const Gradients& grads, std::size_t layer);

// Zeroes grad_w wherever an earlier task owns the weight (prior = 1).
std::vector<double> freeze_prior_weights(std::span<const double> grad_w, std::span<const std::uint8_t> prior);

// Scores initialised from |w| (first task).
ScoreSet magnitude_scores(const Backbone& model);

// Elementwise OR history of all finished task masks.
class CumulativeMask {
public:
    CumulativeMask() = default;
    explicit CumulativeMask(const std::vector<Shape>& shapes);

    std::size_t layer_count() const { return layers_.size(); }
    const LayerMask& layer(std::size_t i) const { return layers_.at(i); }
    const MaskSet& layers() const { return layers_; }
    std::size_t ones() const;

    // Returns M OR m; does not modify this.
    CumulativeMask merged(const MaskSet& task_mask) const;

    bool operator==(const CumulativeMask&) const = default;

private:
    MaskSet layers_;
};

std::size_t ones_count(const LayerMask& mask);

}  // namespace subnetcl::subnet
