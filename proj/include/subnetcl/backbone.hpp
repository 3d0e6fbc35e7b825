#pragma once

// Small maskable CNN: [conv -> batchnorm -> relu] x K, flatten,
// [linear -> relu] x H, then one unmasked classifier head per task
// (task-incremental) or a single shared head (domain-incremental).
//
// Only convolution and linear weights are maskable. Biases, normalization
// parameters and classifier heads are never masked.

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "subnetcl/tensor.hpp"

namespace subnetcl {

enum class LayerKind { convolution, linear };

struct MaskableLayer {
    LayerKind kind = LayerKind::linear;
    std::size_t layer_id = 0;
    std::string name;
    // convolution: {out, in, k, k}; linear: {out, in}
    Shape shape;
    std::vector<double> weights;
    std::vector<double> bias;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t size() const { return weights.size(); }
    std::size_t out_features() const { return shape[0]; }
    std::size_t in_features() const { return shape[1]; }
    std::size_t kernel() const { return kind == LayerKind::convolution ? shape[2] : 1; }
};

struct NormalizationState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    std::vector<double> scale;
    std::vector<double> shift;
    bool frozen = false;

    bool operator==(const NormalizationState&) const = default;
};

struct ClassifierHead {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    std::vector<double> weights;  // {out, in}
    std::vector<double> bias;

    bool operator==(const ClassifierHead&) const = default;
};

struct ConvSpec {
    std::size_t out_channels = 8;
    std::size_t kernel = 3;
    std::size_t stride = 1;
};

struct BackboneConfig {
    std::size_t in_channels = 3;
    std::size_t height = 8;
    std::size_t width = 8;
    std::vector<ConvSpec> convs;
    std::vector<std::size_t> hidden;
    std::size_t num_classes = 2;
    std::size_t num_heads = 1;
    Scenario scenario = Scenario::task_incremental;

    // Throws std::invalid_argument on inconsistent geometry or head count.
    void validate() const;
};

struct FreezePolicy {
    bool normalization = false;
    bool classifier_head = false;
};

// Activations kept by train_forward for the backward pass.
struct ForwardCache {
    struct ConvBlock {
        Tensor input;
        Tensor normalized;  // x-hat
        std::vector<double> inv_std;
        std::vector<double> batch_mean;
        std::vector<double> batch_var;
        Tensor output;  // post-relu
        bool batch_statistics = false;
    };
    struct LinearBlock {
        Tensor input;
        Tensor output;  // post-relu
    };
    std::vector<std::vector<double>> masked_weights;
    std::vector<ConvBlock> conv;
    std::vector<LinearBlock> linear;
    Tensor head_input;
    std::size_t head = 0;
    bool filled = false;
};

// Loss gradients from one backward pass. masked_weight holds dL/dw' where
// w' = w * m is the weight actually used in the forward pass.
struct Gradients {
    bool valid = false;
    std::vector<std::vector<double>> masked_weight;
    std::vector<std::vector<double>> bias;
    std::vector<std::vector<double>> norm_scale;
    std::vector<std::vector<double>> norm_shift;
    std::size_t head = 0;
    std::vector<double> head_weights;
    std::vector<double> head_bias;
};

class Backbone {
public:
    Backbone(BackboneConfig config, std::uint64_t seed);
    Backbone(const Backbone& other);
    Backbone& operator=(const Backbone& other);
    Backbone(Backbone&&) noexcept = default;
    Backbone& operator=(Backbone&&) noexcept = default;
    ~Backbone() = default;

    const BackboneConfig& config() const { return config_; }

    std::size_t maskable_count() const { return layers_.size(); }
    std::span<const MaskableLayer> layers() const { return layers_; }
    const MaskableLayer& layer(std::size_t i) const { return layers_.at(i); }
    MaskableLayer& layer(std::size_t i) { return layers_.at(i); }
    std::vector<Shape> mask_shapes() const;
    MaskSet full_masks() const;

    std::size_t norm_count() const { return norms_.size(); }
    const NormalizationState& norm(std::size_t i) const { return norms_.at(i); }
    NormalizationState& norm(std::size_t i) { return norms_.at(i); }

    std::size_t head_count() const { return heads_.size(); }
    const ClassifierHead& head(std::size_t i) const { return heads_.at(i); }
    ClassifierHead& head(std::size_t i) { return heads_.at(i); }

    // Inference-mode forward with w' = w * m. Normalization uses running
    // statistics. Never mutates parameters.
    Tensor forward_masked(const Tensor& input, const MaskSet& masks, std::size_t head = 0) const;

    // Raw output of the first convolution (before normalization and
    // activation) under the given first-layer mask.
    Tensor tap_first_layer(const Tensor& input, const LayerMask& mask) const;

    // Training forward. Unfrozen normalization layers use batch statistics and
    // refresh their running statistics; frozen ones behave as in inference.
    Tensor train_forward(const Tensor& input, const MaskSet& masks, std::size_t head, ForwardCache& cache);
    Gradients backward(const ForwardCache& cache, const Tensor& grad_logits) const;

    void set_frozen(FreezePolicy policy);
    bool normalization_frozen() const { return frozen_.normalization; }
    bool head_frozen() const { return frozen_.classifier_head; }
    FreezePolicy frozen_policy() const { return frozen_; }

    // Per-layer invocation counters (maskable layers, then heads as one slot).
    std::uint64_t layer_calls(std::size_t maskable_index) const;
    std::uint64_t head_calls() const;
    void reset_call_counters() const;

private:
    Tensor run(const Tensor& input, const MaskSet& masks, std::size_t head, ForwardCache* cache) const;
    void check_masks(const MaskSet& masks) const;
    void check_input(const Tensor& input) const;
    void count_call(std::size_t slot) const;

    BackboneConfig config_;
    std::vector<MaskableLayer> layers_;
    std::vector<NormalizationState> norms_;
    std::vector<ClassifierHead> heads_;
    FreezePolicy frozen_;
    std::size_t conv_count_ = 0;
    std::size_t flat_features_ = 0;
    std::unique_ptr<std::atomic<std::uint64_t>[]> calls_;
};

// Softmax cross-entropy averaged over the batch.
struct LossResult {
    double loss = 0.0;
    Tensor grad_logits;
    std::size_t correct = 0;
};
LossResult cross_entropy(const Tensor& logits, std::span<const int> labels);

std::vector<int> argmax_rows(const Tensor& logits);

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kNormMomentum = 0.1;

}  // namespace subnetcl
