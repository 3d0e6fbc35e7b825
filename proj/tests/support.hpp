#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "subnetcl/backbone.hpp"
#include "subnetcl/config.hpp"
#include "subnetcl/tensor.hpp"

namespace testsupport {

using namespace subnetcl;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> dist(0.0, scale);
    Tensor t(shape);
    for (auto& v : t.values()) {
        v = dist(rng);
    }
    return t;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> out(n);
    for (auto& v : out) {
        v = dist(rng);
    }
    return out;
}

inline LayerMask random_mask(std::size_t n, std::mt19937_64& rng, double p = 0.5)
{
    std::bernoulli_distribution bit(p);
    LayerMask out(n);
    for (auto& v : out) {
        v = bit(rng) ? 1 : 0;
    }
    return out;
}

inline MaskSet random_masks(const Backbone& model, std::mt19937_64& rng, double p = 0.5)
{
    MaskSet out;
    for (const auto& layer : model.layers()) {
        out.push_back(random_mask(layer.size(), rng, p));
    }
    return out;
}

// Direct-index convolution with zero padding of kernel/2.
inline Tensor naive_conv(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                         std::size_t out_c, std::size_t k, std::size_t stride)
{
    const std::size_t n_batch = x.dim(0);
    const std::size_t in_c = x.dim(1);
    const std::size_t h = x.dim(2);
    const std::size_t wd = x.dim(3);
    const auto pad = static_cast<long>(k / 2);
    const std::size_t ho = (h + 2 * (k / 2) - k) / stride + 1;
    const std::size_t wo = (wd + 2 * (k / 2) - k) / stride + 1;
    Tensor out({n_batch, out_c, ho, wo});
    for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t o = 0; o < out_c; ++o) {
            for (std::size_t i = 0; i < ho; ++i) {
                for (std::size_t j = 0; j < wo; ++j) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < in_c; ++c) {
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long y = static_cast<long>(i * stride + ky) - pad;
                                const long xx = static_cast<long>(j * stride + kx) - pad;
                                if (y < 0 || xx < 0 || y >= static_cast<long>(h) || xx >= static_cast<long>(wd)) {
                                    continue;
                                }
                                const double v = x[((n * in_c + c) * h + static_cast<std::size_t>(y)) * wd
                                                   + static_cast<std::size_t>(xx)];
                                acc += w[((o * in_c + c) * k + ky) * k + kx] * v;
                            }
                        }
                    }
                    out[((n * out_c + o) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    return out;
}

inline bool close(double a, double b, double tol)
{
    return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Small, fast experiment for unit tests.
inline ExperimentConfig tiny_config(Scenario scenario, std::size_t tasks = 2)
{
    ExperimentConfig config = make_preset(Preset::desk, scenario);
    config.data.num_tasks = tasks;
    config.data.num_classes = scenario == Scenario::task_incremental ? 2 * tasks : 2;
    config.data.train_samples = 200;
    config.data.test_samples = 80;
    config.backbone.convs = {{4, 3, 1}, {6, 3, 2}};
    config.backbone.hidden = {12};
    config.train.epochs = 3;
    config.finalize();
    return config;
}

}  // namespace testsupport
