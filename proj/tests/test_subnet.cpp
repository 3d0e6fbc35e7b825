#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "support.hpp"
#include "subnetcl/subnet.hpp"

using namespace subnetcl;
using namespace subnetcl::subnet;
using namespace testsupport;

namespace {

// Sort-based top-k: stable order by (score desc, index asc).
LayerMask brute_topk(const std::vector<double>& scores, std::size_t k)
{
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    LayerMask mask(scores.size(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        mask[order[i]] = 1;
    }
    return mask;
}

}  // namespace

TEST_SUITE("subnet") {

TEST_CASE("top-k count rounds half up")
{
    CHECK(topk_count(10, 0.4) == 4);
    CHECK(topk_count(3, 0.5) == 2);
    CHECK(topk_count(5, 0.5) == 3);
    CHECK(topk_count(7, 1.0) == 7);
    CHECK(topk_count(0, 0.4) == 0);
}

TEST_CASE("top-k matches sort-based brute force, ties to the lower index")
{
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> size(1, 2000);
    std::uniform_real_distribution<double> frac(0.01, 1.0);
    std::uniform_int_distribution<int> coarse(-3, 3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = size(rng);
        std::vector<double> scores(n);
        // Half the trials use a tiny value range to force many ties.
        for (auto& s : scores) {
            s = trial % 2 == 0 ? static_cast<double>(coarse(rng)) : random_values(1, rng)[0];
        }
        const double c = frac(rng);
        const auto mask = select_mask_topk(scores, c);
        REQUIRE(mask == brute_topk(scores, topk_count(n, c)));
    }
    const std::vector<double> tied{1.0, 1.0, 1.0, 1.0};
    CHECK(select_mask_topk(tied, 0.5) == LayerMask{1, 1, 0, 0});
}

TEST_CASE("threshold selection follows s >= alpha * max(s)")
{
    const std::vector<double> s{0.1, 0.5, 0.9, 1.0};
    CHECK(layer_threshold(s, 0.5) == 0.5);
    CHECK(select_mask_threshold(s, 0.5) == LayerMask{0, 1, 1, 1});
    CHECK_THROWS_AS(layer_threshold(std::vector<double>{}, 0.5), std::invalid_argument);

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto scores = random_values(500, rng);
        const double alpha = 0.3;
        const double theta = alpha * *std::max_element(scores.begin(), scores.end());
        const auto mask = select_mask_threshold(scores, layer_threshold(scores, alpha));
        for (std::size_t i = 0; i < scores.size(); ++i) {
            REQUIRE(mask[i] == (scores[i] >= theta ? 1 : 0));
        }
    }
}

TEST_CASE("threshold mode falls back to top-k when max(s) <= 0")
{
    SelectionConfig config;
    config.mode = SelectionMode::dynamic_threshold;
    config.alpha = 0.5;
    const std::vector<double> s{-3.0, -1.0, -2.0, -0.5};
    CHECK(select_layer_mask(s, config, 0) == LayerMask{0, 1, 0, 1});
    config.layer_alpha = {0.25};
    CHECK(config.alpha_for(0) == 0.25);
    CHECK(config.alpha_for(1) == 0.5);
    CHECK(select_layer_mask(s, config, 0) == LayerMask{0, 0, 0, 1});
}

TEST_CASE("score update matches a scalar loop exactly")
{
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 3000;
        const auto s = random_values(n, rng);
        const auto g = random_values(n, rng);
        const auto prior = random_mask(n, rng, 0.3);
        const auto current = random_mask(n, rng, 0.5);
        const double eta = 0.01 * static_cast<double>(1 + rng() % 100);
        const double gamma = 1.0 + 0.1 * static_cast<double>(rng() % 10);
        const auto out = score_update(s, g, prior, current, eta, gamma);
        std::vector<double> inplace = s;
        score_update_inplace(inplace, g, prior, current, eta, gamma);
        for (std::size_t i = 0; i < n; ++i) {
            double expected;
            if (prior[i] == 1 || current[i] == 0) {
                expected = s[i] - eta * g[i] * gamma;
            } else {
                expected = s[i] - eta * g[i];
            }
            REQUIRE(out[i] == expected);
            REQUIRE(inplace[i] == expected);
        }
    }
}

TEST_CASE("gamma = 1 makes the score update uniform")
{
    const std::vector<double> s{1.0, 2.0, 3.0};
    const std::vector<double> g{0.5, -0.5, 1.0};
    const LayerMask prior{1, 0, 0};
    const LayerMask current{0, 1, 0};
    const auto out = score_update(s, g, prior, current, 0.1, 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(out[i] == s[i] - 0.1 * g[i]);
    }
}

TEST_CASE("prior weights receive zero gradient")
{
    const std::vector<double> g{1.0, -2.0, 3.0, 4.0};
    const LayerMask prior{1, 0, 1, 0};
    CHECK(freeze_prior_weights(g, prior) == std::vector<double>{0.0, -2.0, 0.0, 4.0});
}

TEST_CASE("score gradient is the straight-through product")
{
    BackboneConfig config;
    config.in_channels = 3;
    config.height = 1;
    config.width = 1;
    config.hidden = {2, 2};
    config.num_classes = 2;
    Backbone model(config, 3);
    std::mt19937_64 rng(2);
    const auto masks = random_masks(model, rng);
    ForwardCache cache;
    const Tensor logits = model.train_forward(random_tensor({4, 3, 1, 1}, rng), masks, 0, cache);
    const auto grads = model.backward(cache, cross_entropy(logits, std::vector<int>{0, 1, 1, 0}).grad_logits);
    for (std::size_t l = 0; l < model.maskable_count(); ++l) {
        const auto gs = score_gradient(model, grads, l);
        for (std::size_t i = 0; i < gs.size(); ++i) {
            CHECK(gs[i] == grads.masked_weight[l][i] * model.layer(l).weights[i]);
        }
    }
    CHECK_THROWS_AS(score_gradient(model, Gradients{}, 0), std::logic_error);
}

TEST_CASE("magnitude scores and cumulative masks")
{
    BackboneConfig config;
    config.in_channels = 1;
    config.height = 3;
    config.width = 3;
    config.convs = {{2, 3, 1}};
    config.num_classes = 2;
    Backbone model(config, 4);
    const auto scores = magnitude_scores(model);
    for (std::size_t i = 0; i < scores[0].size(); ++i) {
        CHECK(scores[0][i] == std::fabs(model.layer(0).weights[i]));
    }
    CumulativeMask history(model.mask_shapes());
    CHECK(history.ones() == 0);
    MaskSet a{LayerMask(18, 0)};
    a[0][3] = 1;
    MaskSet b{LayerMask(18, 0)};
    b[0][3] = 1;
    b[0][5] = 1;
    const auto merged = history.merged(a).merged(b);
    CHECK(merged.ones() == 2);
    CHECK(history.ones() == 0);
    CHECK(ones_count(merged.layer(0)) == 2);
}

TEST_CASE("selection config validation")
{
    SelectionConfig config;
    config.sparsity = 0.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config.sparsity = 0.4;
    config.alpha = 1.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config.alpha = 0.5;
    config.gamma = 0.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

}
