#include "subnetcl/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace subnetcl {

namespace {

std::size_t conv_out_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t padding)
{
    return (extent + 2 * padding - kernel) / stride + 1;
}

std::vector<double> apply_mask(const MaskableLayer& layer, const LayerMask& mask)
{
    std::vector<double> out(layer.weights.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = mask[i] != 0 ? layer.weights[i] : 0.0;
    }
    return out;
}

Tensor conv_forward(const Tensor& x, std::span<const double> w, std::span<const double> bias,
                    const MaskableLayer& layer)
{
    const std::size_t n_batch = x.dim(0);
    const std::size_t in_c = x.dim(1);
    const std::size_t h = x.dim(2);
    const std::size_t wd = x.dim(3);
    const std::size_t out_c = layer.out_features();
    const std::size_t k = layer.kernel();
    const std::size_t s = layer.stride;
    const auto p = static_cast<std::ptrdiff_t>(layer.padding);
    const std::size_t ho = conv_out_extent(h, k, s, layer.padding);
    const std::size_t wo = conv_out_extent(wd, k, s, layer.padding);

    Tensor out({n_batch, out_c, ho, wo});
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t o = 0; o < out_c; ++o) {
            double* plane = out.data() + (n * out_c + o) * ho * wo;
            std::fill(plane, plane + ho * wo, bias[o]);
            for (std::size_t c = 0; c < in_c; ++c) {
                const double* src = x.data() + (n * in_c + c) * h * wd;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const double wv = w[((o * in_c + c) * k + ky) * k + kx];
                        if (wv == 0.0) {
                            continue;
                        }
                        for (std::size_t oy = 0; oy < ho; ++oy) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * s + ky) - p;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                                continue;
                            }
                            const double* row = src + static_cast<std::size_t>(iy) * wd;
                            double* dst = plane + oy * wo;
                            for (std::size_t ox = 0; ox < wo; ++ox) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * s + kx) - p;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) {
                                    continue;
                                }
                                dst[ox] += wv * row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates dW' and db; writes dx when requested.
void conv_backward(const Tensor& x, std::span<const double> w, const Tensor& dout, const MaskableLayer& layer,
                   std::vector<double>& dw, std::vector<double>& db, Tensor* dx)
{
    const std::size_t n_batch = x.dim(0);
    const std::size_t in_c = x.dim(1);
    const std::size_t h = x.dim(2);
    const std::size_t wd = x.dim(3);
    const std::size_t out_c = dout.dim(1);
    const std::size_t ho = dout.dim(2);
    const std::size_t wo = dout.dim(3);
    const std::size_t k = layer.kernel();
    const std::size_t s = layer.stride;
    const auto p = static_cast<std::ptrdiff_t>(layer.padding);

    dw.assign(w.size(), 0.0);
    db.assign(out_c, 0.0);
    if (dx != nullptr) {
        *dx = Tensor(x.shape());
    }
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t o = 0; o < out_c; ++o) {
            const double* g = dout.data() + (n * out_c + o) * ho * wo;
            double bsum = 0.0;
            for (std::size_t i = 0; i < ho * wo; ++i) {
                bsum += g[i];
            }
            db[o] += bsum;
            for (std::size_t c = 0; c < in_c; ++c) {
                const double* src = x.data() + (n * in_c + c) * h * wd;
                double* dsrc = dx != nullptr ? dx->data() + (n * in_c + c) * h * wd : nullptr;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const std::size_t widx = ((o * in_c + c) * k + ky) * k + kx;
                        const double wv = w[widx];
                        double acc = 0.0;
                        for (std::size_t oy = 0; oy < ho; ++oy) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * s + ky) - p;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                                continue;
                            }
                            const std::size_t row = static_cast<std::size_t>(iy) * wd;
                            for (std::size_t ox = 0; ox < wo; ++ox) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * s + kx) - p;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) {
                                    continue;
                                }
                                const double gv = g[oy * wo + ox];
                                acc += gv * src[row + static_cast<std::size_t>(ix)];
                                if (dsrc != nullptr && wv != 0.0) {
                                    dsrc[row + static_cast<std::size_t>(ix)] += wv * gv;
                                }
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
}

Tensor linear_forward(const Tensor& x, std::span<const double> w, std::span<const double> bias,
                      std::size_t out_f)
{
    const std::size_t n_batch = x.dim(0);
    const std::size_t in_f = x.size() / n_batch;
    Tensor out({n_batch, out_f});
    for (std::size_t n = 0; n < n_batch; ++n) {
        const double* src = x.data() + n * in_f;
        for (std::size_t o = 0; o < out_f; ++o) {
            const double* row = w.data() + o * in_f;
            double acc = bias[o];
            for (std::size_t i = 0; i < in_f; ++i) {
                acc += row[i] * src[i];
            }
            out[n * out_f + o] = acc;
        }
    }
    return out;
}

void linear_backward(const Tensor& x, std::span<const double> w, const Tensor& dout, std::vector<double>& dw,
                     std::vector<double>& db, Tensor* dx)
{
    const std::size_t n_batch = x.dim(0);
    const std::size_t in_f = x.size() / n_batch;
    const std::size_t out_f = dout.dim(1);
    dw.assign(out_f * in_f, 0.0);
    db.assign(out_f, 0.0);
    if (dx != nullptr) {
        *dx = Tensor(x.shape());
    }
    for (std::size_t n = 0; n < n_batch; ++n) {
        const double* src = x.data() + n * in_f;
        for (std::size_t o = 0; o < out_f; ++o) {
            const double g = dout[n * out_f + o];
            db[o] += g;
            double* drow = dw.data() + o * in_f;
            for (std::size_t i = 0; i < in_f; ++i) {
                drow[i] += g * src[i];
            }
            if (dx != nullptr) {
                const double* row = w.data() + o * in_f;
                double* dsrc = dx->data() + n * in_f;
                for (std::size_t i = 0; i < in_f; ++i) {
                    dsrc[i] += row[i] * g;
                }
            }
        }
    }
}

void relu_inplace(Tensor& t)
{
    for (double& v : t.values()) {
        v = v > 0.0 ? v : 0.0;
    }
}

void relu_backward_inplace(Tensor& grad, const Tensor& output)
{
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(output[i] > 0.0)) {
            grad[i] = 0.0;
        }
    }
}

}  // namespace

void BackboneConfig::validate() const
{
    if (in_channels == 0 || height == 0 || width == 0) {
        throw std::invalid_argument("backbone input shape must be nonzero");
    }
    if (num_classes == 0) {
        throw std::invalid_argument("backbone num_classes must be positive");
    }
    if (num_heads == 0) {
        throw std::invalid_argument("backbone needs at least one classifier head");
    }
    if (scenario == Scenario::domain_incremental && num_heads != 1) {
        throw std::invalid_argument("domain-incremental backbone must have exactly one shared head");
    }
    std::size_t h = height;
    std::size_t w = width;
    for (const auto& conv : convs) {
        if (conv.out_channels == 0 || conv.kernel == 0 || conv.kernel % 2 == 0 || conv.stride == 0) {
            throw std::invalid_argument("convolution needs positive channels, odd kernel and positive stride");
        }
        h = conv_out_extent(h, conv.kernel, conv.stride, conv.kernel / 2);
        w = conv_out_extent(w, conv.kernel, conv.stride, conv.kernel / 2);
        if (h == 0 || w == 0) {
            throw std::invalid_argument("convolution stack reduces spatial extent to zero");
        }
    }
    for (std::size_t width_f : hidden) {
        if (width_f == 0) {
            throw std::invalid_argument("hidden linear width must be positive");
        }
    }
}

Backbone::Backbone(BackboneConfig config, std::uint64_t seed) : config_(std::move(config))
{
    config_.validate();
    std::mt19937_64 rng(seed);
    auto uniform_fill = [&rng](std::vector<double>& values, double bound) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : values) {
            v = dist(rng);
        }
    };

    std::size_t channels = config_.in_channels;
    std::size_t h = config_.height;
    std::size_t w = config_.width;
    for (const auto& spec : config_.convs) {
        MaskableLayer layer;
        layer.kind = LayerKind::convolution;
        layer.layer_id = layers_.size();
        layer.name = "conv" + std::to_string(layers_.size());
        layer.shape = {spec.out_channels, channels, spec.kernel, spec.kernel};
        layer.weights.resize(element_count(layer.shape));
        layer.bias.assign(spec.out_channels, 0.0);
        layer.stride = spec.stride;
        layer.padding = spec.kernel / 2;
        uniform_fill(layer.weights, std::sqrt(6.0 / static_cast<double>(channels * spec.kernel * spec.kernel)));
        layers_.push_back(std::move(layer));

        NormalizationState norm;
        norm.running_mean.assign(spec.out_channels, 0.0);
        norm.running_var.assign(spec.out_channels, 1.0);
        norm.scale.assign(spec.out_channels, 1.0);
        norm.shift.assign(spec.out_channels, 0.0);
        norms_.push_back(std::move(norm));

        h = conv_out_extent(h, spec.kernel, spec.stride, spec.kernel / 2);
        w = conv_out_extent(w, spec.kernel, spec.stride, spec.kernel / 2);
        channels = spec.out_channels;
    }
    conv_count_ = layers_.size();
    flat_features_ = channels * h * w;

    std::size_t features = flat_features_;
    for (std::size_t width_f : config_.hidden) {
        MaskableLayer layer;
        layer.kind = LayerKind::linear;
        layer.layer_id = layers_.size();
        layer.name = "fc" + std::to_string(layers_.size() - conv_count_);
        layer.shape = {width_f, features};
        layer.weights.resize(width_f * features);
        layer.bias.assign(width_f, 0.0);
        uniform_fill(layer.weights, std::sqrt(6.0 / static_cast<double>(features)));
        layers_.push_back(std::move(layer));
        features = width_f;
    }

    for (std::size_t i = 0; i < config_.num_heads; ++i) {
        ClassifierHead head;
        head.in_features = features;
        head.out_features = config_.num_classes;
        head.weights.resize(features * config_.num_classes);
        head.bias.assign(config_.num_classes, 0.0);
        uniform_fill(head.weights, std::sqrt(6.0 / static_cast<double>(features + config_.num_classes)));
        heads_.push_back(std::move(head));
    }

    calls_ = std::make_unique<std::atomic<std::uint64_t>[]>(layers_.size() + 1);
    reset_call_counters();
}

Backbone::Backbone(const Backbone& other)
    : config_(other.config_),
      layers_(other.layers_),
      norms_(other.norms_),
      heads_(other.heads_),
      frozen_(other.frozen_),
      conv_count_(other.conv_count_),
      flat_features_(other.flat_features_),
      calls_(std::make_unique<std::atomic<std::uint64_t>[]>(other.layers_.size() + 1))
{
    reset_call_counters();
}

Backbone& Backbone::operator=(const Backbone& other)
{
    if (this != &other) {
        Backbone copy(other);
        *this = std::move(copy);
    }
    return *this;
}

std::vector<Shape> Backbone::mask_shapes() const
{
    std::vector<Shape> shapes;
    shapes.reserve(layers_.size());
    for (const auto& layer : layers_) {
        shapes.push_back(layer.shape);
    }
    return shapes;
}

MaskSet Backbone::full_masks() const
{
    MaskSet masks;
    for (const auto& layer : layers_) {
        masks.emplace_back(layer.size(), std::uint8_t{1});
    }
    return masks;
}

void Backbone::check_masks(const MaskSet& masks) const
{
    if (masks.size() != layers_.size()) {
        throw std::invalid_argument("mask set has " + std::to_string(masks.size()) + " layers, model has "
                                    + std::to_string(layers_.size()));
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (masks[i].size() != layers_[i].size()) {
            throw std::invalid_argument("mask shape mismatch for layer '" + layers_[i].name + "': expected "
                                        + std::to_string(layers_[i].size()) + " elements, got "
                                        + std::to_string(masks[i].size()));
        }
    }
}

void Backbone::check_input(const Tensor& input) const
{
    if (input.rank() != 4 || input.dim(1) != config_.in_channels || input.dim(2) != config_.height
        || input.dim(3) != config_.width || input.dim(0) == 0) {
        throw std::invalid_argument("input shape " + shape_string(input.shape()) + " does not match model input [Nx"
                                    + std::to_string(config_.in_channels) + "x" + std::to_string(config_.height)
                                    + "x" + std::to_string(config_.width) + "]");
    }
}

void Backbone::count_call(std::size_t slot) const
{
    calls_[slot].fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t Backbone::layer_calls(std::size_t maskable_index) const
{
    if (maskable_index >= layers_.size()) {
        throw std::out_of_range("layer index out of range");
    }
    return calls_[maskable_index].load(std::memory_order_relaxed);
}

std::uint64_t Backbone::head_calls() const
{
    return calls_[layers_.size()].load(std::memory_order_relaxed);
}

void Backbone::reset_call_counters() const
{
    for (std::size_t i = 0; i <= layers_.size(); ++i) {
        calls_[i].store(0, std::memory_order_relaxed);
    }
}

Tensor Backbone::run(const Tensor& input, const MaskSet& masks, std::size_t head, ForwardCache* cache) const
{
    check_input(input);
    check_masks(masks);
    if (head >= heads_.size()) {
        throw std::out_of_range("classifier head " + std::to_string(head) + " does not exist");
    }
    const bool training = cache != nullptr;
    if (training) {
        cache->masked_weights.clear();
        cache->conv.assign(conv_count_, {});
        cache->linear.assign(layers_.size() - conv_count_, {});
        cache->head = head;
    }

    Tensor x = input;
    for (std::size_t li = 0; li < conv_count_; ++li) {
        const MaskableLayer& layer = layers_[li];
        const NormalizationState& norm = norms_[li];
        std::vector<double> wm = apply_mask(layer, masks[li]);
        count_call(li);
        Tensor z = conv_forward(x, wm, layer.bias, layer);

        const std::size_t n_batch = z.dim(0);
        const std::size_t channels = z.dim(1);
        const std::size_t plane = z.dim(2) * z.dim(3);
        const bool batch_stats = training && !norm.frozen;
        std::vector<double> mean(channels);
        std::vector<double> var(channels);
        if (batch_stats) {
            const double count = static_cast<double>(n_batch * plane);
            for (std::size_t c = 0; c < channels; ++c) {
                double sum = 0.0;
                for (std::size_t n = 0; n < n_batch; ++n) {
                    const double* src = z.data() + (n * channels + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum += src[i];
                    }
                }
                mean[c] = sum / count;
                double sq = 0.0;
                for (std::size_t n = 0; n < n_batch; ++n) {
                    const double* src = z.data() + (n * channels + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double d = src[i] - mean[c];
                        sq += d * d;
                    }
                }
                var[c] = sq / count;
            }
        } else {
            mean = norm.running_mean;
            var = norm.running_var;
        }
        std::vector<double> inv_std(channels);
        for (std::size_t c = 0; c < channels; ++c) {
            inv_std[c] = 1.0 / std::sqrt(var[c] + kNormEpsilon);
        }
        Tensor normalized(z.shape());
        Tensor y(z.shape());
        for (std::size_t n = 0; n < n_batch; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t base = (n * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double xh = (z[base + i] - mean[c]) * inv_std[c];
                    normalized[base + i] = xh;
                    const double v = norm.scale[c] * xh + norm.shift[c];
                    y[base + i] = v > 0.0 ? v : 0.0;
                }
            }
        }
        if (training) {
            auto& block = cache->conv[li];
            block.input = std::move(x);
            block.normalized = std::move(normalized);
            block.inv_std = std::move(inv_std);
            block.batch_statistics = batch_stats;
            if (batch_stats) {
                block.batch_mean = mean;
                block.batch_var = var;
            }
            block.output = y;
            cache->masked_weights.push_back(std::move(wm));
        }
        x = std::move(y);
    }

    if (x.rank() != 2) {
        const std::size_t n_batch = x.dim(0);
        x = Tensor({n_batch, x.size() / n_batch}, std::vector<double>(x.storage()));
    }

    for (std::size_t li = conv_count_; li < layers_.size(); ++li) {
        const MaskableLayer& layer = layers_[li];
        std::vector<double> wm = apply_mask(layer, masks[li]);
        count_call(li);
        Tensor y = linear_forward(x, wm, layer.bias, layer.out_features());
        relu_inplace(y);
        if (training) {
            auto& block = cache->linear[li - conv_count_];
            block.input = std::move(x);
            block.output = y;
            cache->masked_weights.push_back(std::move(wm));
        }
        x = std::move(y);
    }

    const ClassifierHead& cls = heads_[head];
    count_call(layers_.size());
    Tensor logits = linear_forward(x, cls.weights, cls.bias, cls.out_features);
    if (training) {
        cache->head_input = std::move(x);
        cache->filled = true;
    }
    return logits;
}

Tensor Backbone::forward_masked(const Tensor& input, const MaskSet& masks, std::size_t head) const
{
    return run(input, masks, head, nullptr);
}

Tensor Backbone::tap_first_layer(const Tensor& input, const LayerMask& mask) const
{
    if (conv_count_ == 0) {
        throw std::logic_error("first maskable layer is not a convolution");
    }
    check_input(input);
    const MaskableLayer& first = layers_.front();
    if (mask.size() != first.size()) {
        throw std::invalid_argument("mask shape mismatch for layer '" + first.name + "': expected "
                                    + std::to_string(first.size()) + " elements, got " + std::to_string(mask.size()));
    }
    count_call(0);
    return conv_forward(input, apply_mask(first, mask), first.bias, first);
}

Tensor Backbone::train_forward(const Tensor& input, const MaskSet& masks, std::size_t head, ForwardCache& cache)
{
    Tensor logits = run(input, masks, head, &cache);
    for (std::size_t li = 0; li < conv_count_; ++li) {
        const auto& block = cache.conv[li];
        if (!block.batch_statistics) {
            continue;
        }
        NormalizationState& norm = norms_[li];
        const double count = static_cast<double>(block.normalized.size() / norm.running_mean.size());
        const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
        for (std::size_t c = 0; c < norm.running_mean.size(); ++c) {
            norm.running_mean[c] = (1.0 - kNormMomentum) * norm.running_mean[c] + kNormMomentum * block.batch_mean[c];
            norm.running_var[c] =
                (1.0 - kNormMomentum) * norm.running_var[c] + kNormMomentum * block.batch_var[c] * unbias;
        }
    }
    return logits;
}

Gradients Backbone::backward(const ForwardCache& cache, const Tensor& grad_logits) const
{
    if (!cache.filled) {
        throw std::logic_error("backward called without a training forward pass");
    }
    Gradients grads;
    grads.masked_weight.resize(layers_.size());
    grads.bias.resize(layers_.size());
    grads.norm_scale.resize(conv_count_);
    grads.norm_shift.resize(conv_count_);
    grads.head = cache.head;

    const ClassifierHead& cls = heads_[cache.head];
    Tensor dx;
    linear_backward(cache.head_input, cls.weights, grad_logits, grads.head_weights, grads.head_bias, &dx);

    for (std::size_t li = layers_.size(); li-- > conv_count_;) {
        const auto& block = cache.linear[li - conv_count_];
        Tensor dz = std::move(dx);
        relu_backward_inplace(dz, block.output);
        linear_backward(block.input, cache.masked_weights[li], dz, grads.masked_weight[li], grads.bias[li], &dx);
    }

    for (std::size_t li = conv_count_; li-- > 0;) {
        const auto& block = cache.conv[li];
        const NormalizationState& norm = norms_[li];
        Tensor dy(block.output.shape(), std::vector<double>(dx.storage()));
        relu_backward_inplace(dy, block.output);

        const std::size_t n_batch = dy.dim(0);
        const std::size_t channels = dy.dim(1);
        const std::size_t plane = dy.dim(2) * dy.dim(3);
        const double count = static_cast<double>(n_batch * plane);
        auto& dscale = grads.norm_scale[li];
        auto& dshift = grads.norm_shift[li];
        dscale.assign(channels, 0.0);
        dshift.assign(channels, 0.0);
        for (std::size_t n = 0; n < n_batch; ++n) {
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t base = (n * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    dscale[c] += dy[base + i] * block.normalized[base + i];
                    dshift[c] += dy[base + i];
                }
            }
        }
        Tensor dz(dy.shape());
        for (std::size_t c = 0; c < channels; ++c) {
            const double g = norm.scale[c] * block.inv_std[c];
            // With batch statistics: dz = g/M * (M*dy - sum(dy) - xhat*sum(dy*xhat)).
            const double sum_dy = dshift[c];
            const double sum_dy_xhat = dscale[c];
            for (std::size_t n = 0; n < n_batch; ++n) {
                const std::size_t base = (n * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    if (block.batch_statistics) {
                        dz[base + i] =
                            g * (dy[base + i] - (sum_dy + block.normalized[base + i] * sum_dy_xhat) / count);
                    } else {
                        dz[base + i] = g * dy[base + i];
                    }
                }
            }
        }
        const bool need_dx = li > 0;
        conv_backward(block.input, cache.masked_weights[li], dz, layers_[li], grads.masked_weight[li], grads.bias[li],
                      need_dx ? &dx : nullptr);
    }
    grads.valid = true;
    return grads;
}

void Backbone::set_frozen(FreezePolicy policy)
{
    if (policy.classifier_head && config_.scenario == Scenario::task_incremental) {
        throw std::invalid_argument("cannot freeze the classifier head in the task-incremental scenario: heads are per task");
    }
    frozen_.normalization = frozen_.normalization || policy.normalization;
    frozen_.classifier_head = frozen_.classifier_head || policy.classifier_head;
    if (frozen_.normalization) {
        for (auto& norm : norms_) {
            norm.frozen = true;
        }
    }
}

LossResult cross_entropy(const Tensor& logits, std::span<const int> labels)
{
    const std::size_t n_batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    if (labels.size() != n_batch) {
        throw std::invalid_argument("label count does not match batch size");
    }
    LossResult result;
    result.grad_logits = Tensor(logits.shape());
    const double inv_n = 1.0 / static_cast<double>(n_batch);
    for (std::size_t n = 0; n < n_batch; ++n) {
        const double* row = logits.data() + n * classes;
        const auto label = static_cast<std::size_t>(labels[n]);
        if (labels[n] < 0 || label >= classes) {
            throw std::invalid_argument("label out of range for classifier head");
        }
        double max_v = row[0];
        std::size_t arg = 0;
        for (std::size_t k = 1; k < classes; ++k) {
            if (row[k] > max_v) {
                max_v = row[k];
                arg = k;
            }
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            denom += std::exp(row[k] - max_v);
        }
        const double log_denom = std::log(denom);
        result.loss += (log_denom - (row[label] - max_v)) * inv_n;
        double* grad = result.grad_logits.data() + n * classes;
        for (std::size_t k = 0; k < classes; ++k) {
            const double prob = std::exp(row[k] - max_v - log_denom);
            grad[k] = (prob - (k == label ? 1.0 : 0.0)) * inv_n;
        }
        if (arg == label) {
            ++result.correct;
        }
    }
    return result;
}

std::vector<int> argmax_rows(const Tensor& logits)
{
    const std::size_t n_batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    std::vector<int> out(n_batch);
    for (std::size_t n = 0; n < n_batch; ++n) {
        const double* row = logits.data() + n * classes;
        std::size_t arg = 0;
        for (std::size_t k = 1; k < classes; ++k) {
            if (row[k] > row[arg]) {
                arg = k;
            }
        }
        out[n] = static_cast<int>(arg);
    }
    return out;
}

}  // namespace subnetcl
