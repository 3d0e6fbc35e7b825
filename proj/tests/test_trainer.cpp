#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "subnetcl/trainer.hpp"

using namespace subnetcl;
using namespace subnetcl::trainer;
using namespace testsupport;

TEST_SUITE("trainer") {

TEST_CASE("plateau scheduler: flat accuracies reduce after patience epochs")
{
    PlateauScheduler s(3e-4, {});
    std::vector<double> lrs;
    for (int e = 0; e < 6; ++e) {
        lrs.push_back(s.step(50.0));
    }
    for (int e = 0; e < 5; ++e) {
        CHECK(lrs[static_cast<std::size_t>(e)] == 3e-4);
    }
    CHECK(lrs[5] == 3e-4 * 0.3);
    CHECK(s.bad_epochs() == 0);
}

TEST_CASE("plateau scheduler: increases keep the rate, tiny gains do not count")
{
    PlateauScheduler rising(1e-3, {});
    for (int e = 0; e < 20; ++e) {
        CHECK(rising.step(10.0 + e) == 1e-3);
    }
    PlateauScheduler creeping(1e-3, {});
    double acc = 50.0;
    double lr = 0.0;
    for (int e = 0; e < 6; ++e) {
        lr = creeping.step(acc);
        acc += 1e-5;
    }
    CHECK(lr == 1e-3 * 0.3);
}

TEST_CASE("plateau scheduler: clamps at the minimum rate")
{
    PlateauScheduler s(5e-5, {});
    double lr = 0.0;
    for (int e = 0; e < 60; ++e) {
        lr = s.step(1.0);
        CHECK(lr >= 1e-5);
    }
    CHECK(lr == 1e-5);
}

TEST_CASE("adam update matches the scalar formula and skips frozen positions")
{
    std::mt19937_64 rng(4);
    auto params = random_values(50, rng);
    const auto start = params;
    const LayerMask frozen = random_mask(50, rng, 0.3);
    AdamMoments moments;
    std::vector<double> m(50, 0.0);
    std::vector<double> v(50, 0.0);
    std::vector<double> expected = start;
    for (std::uint64_t step = 1; step <= 4; ++step) {
        const auto g = random_values(50, rng);
        adam_update(params, g, moments, 0.01, step, {}, &frozen);
        for (std::size_t i = 0; i < 50; ++i) {
            if (frozen[i] != 0) {
                continue;
            }
            m[i] = 0.9 * m[i] + (1.0 - 0.9) * g[i];
            v[i] = 0.999 * v[i] + (1.0 - 0.999) * g[i] * g[i];
            const double mh = m[i] / (1.0 - std::pow(0.9, static_cast<double>(step)));
            const double vh = v[i] / (1.0 - std::pow(0.999, static_cast<double>(step)));
            expected[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(params[i] == expected[i]);
        if (frozen[i] != 0) {
            CHECK(params[i] == start[i]);
            CHECK(moments.first[i] == 0.0);
            CHECK(moments.second[i] == 0.0);
        }
    }
}

TEST_CASE("presets")
{
    const auto task = TrainConfig::paper_preset(Scenario::task_incremental);
    CHECK(task.weight_lr == 5e-5);
    CHECK(task.batch_size == 32);
    CHECK(task.epochs == 100);
    CHECK(task.selection.sparsity == 0.4);
    const auto domain = TrainConfig::paper_preset(Scenario::domain_incremental);
    CHECK(domain.weight_lr == 3e-4);
    CHECK(domain.batch_size == 48);
    CHECK(domain.epochs == 80);
    CHECK(domain.selection.sparsity == 0.85);
    CHECK(domain.scheduler.factor == 0.3);
    CHECK(domain.scheduler.patience == 5);
    CHECK(domain.scheduler.min_lr == 1e-5);
}

TEST_CASE("seed derivation is deterministic and purpose-separated")
{
    CHECK(derive_seed(7, 1) == derive_seed(7, 1));
    CHECK(derive_seed(7, 1) != derive_seed(7, 2));
    CHECK(derive_seed(7, 2, 0) != derive_seed(7, 2, 1));
    CHECK(derive_seed(7, 1) != derive_seed(8, 1));
}

TEST_CASE("two-task run keeps earlier subnetworks intact")
{
    const auto config = tiny_config(Scenario::domain_incremental);
    const auto tasks = datasets::build_sequence(config.data);
    ContinualLearner learner(config.backbone, config.train);
    const auto r0 = learner.train_task(tasks[0]);
    CHECK(r0.audit.passed());
    CHECK(!r0.audit.normalization_checked);
    CHECK(learner.model().normalization_frozen());
    CHECK(learner.model().head_frozen());
    for (std::size_t l = 0; l < r0.masks.size(); ++l) {
        CHECK(subnet::ones_count(r0.masks[l]) == subnet::topk_count(r0.masks[l].size(), 0.85));
    }
    const auto preds0 = predict(learner.model(), tasks[0].test, learner.task_masks(0), 0);
    const Backbone snapshot = learner.model();

    const auto r1 = learner.train_task(tasks[1]);
    CHECK(r1.audit.passed());
    CHECK(r1.audit.normalization_checked);
    CHECK(r1.audit.head_checked);
    CHECK(r1.audit.free_weights_changed > 0);
    for (std::size_t l = 0; l < r0.masks.size(); ++l) {
        for (std::size_t i = 0; i < r0.masks[l].size(); ++i) {
            if (r0.masks[l][i] != 0) {
                REQUIRE(learner.model().layer(l).weights[i] == snapshot.layer(l).weights[i]);
            }
        }
    }
    CHECK(predict(learner.model(), tasks[0].test, learner.task_masks(0), 0) == preds0);
    CHECK(learner.task_masks(1) == r1.masks);
    CHECK(learner.history() == subnet::CumulativeMask(learner.model().mask_shapes()).merged(r0.masks).merged(r1.masks));
    CHECK(learner.statistics().size() == 2);
    CHECK(learner.first_layer_masks()[1] == r1.masks[0]);
    CHECK(r1.epochs.size() == config.train.epochs);

    ContinualLearner restored(config.train, learner.model(), learner.scores(), learner.masks(), learner.statistics());
    CHECK(restored.history() == learner.history());
    CHECK(restored.tasks_done() == 2);
}

TEST_CASE("task-incremental heads stay separate and trainable")
{
    const auto config = tiny_config(Scenario::task_incremental);
    const auto tasks = datasets::build_sequence(config.data);
    ContinualLearner learner(config.backbone, config.train);
    learner.train_task(tasks[0]);
    CHECK(!learner.model().head_frozen());
    const auto head0 = learner.model().head(0);
    const auto head1 = learner.model().head(1);
    learner.train_task(tasks[1]);
    CHECK(learner.model().head(0) == head0);
    CHECK(!(learner.model().head(1) == head1));
    CHECK(learner.head_for(1) == 1);
}

TEST_CASE("without freezing, shared state drifts")
{
    auto config = tiny_config(Scenario::domain_incremental);
    config.train.freeze_norm = false;
    config.train.freeze_head = false;
    const auto tasks = datasets::build_sequence(config.data);
    ContinualLearner learner(config.backbone, config.train);
    learner.train_task(tasks[0]);
    const auto norm = learner.model().norm(0);
    const auto r1 = learner.train_task(tasks[1]);
    CHECK(!r1.audit.normalization_checked);
    CHECK(r1.audit.prior_weights_unchanged);
    CHECK(!(learner.model().norm(0) == norm));
}

TEST_CASE("toy two-task run reaches 90% on both tasks")
{
    auto config = make_preset(Preset::desk, Scenario::task_incremental);
    config.data.num_tasks = 2;
    config.data.num_classes = 4;
    config.finalize();
    const auto tasks = datasets::build_sequence(config.data);
    ContinualLearner learner(config.backbone, config.train);
    learner.train_task(tasks[0]);
    learner.train_task(tasks[1]);
    for (std::size_t t = 0; t < 2; ++t) {
        const auto preds = predict(learner.model(), tasks[t].test, learner.task_masks(t), t);
        CHECK(accuracy_percent(preds, tasks[t].test.labels) >= 90.0);
    }
}

TEST_CASE("task order and configuration errors")
{
    const auto config = tiny_config(Scenario::domain_incremental);
    const auto tasks = datasets::build_sequence(config.data);
    ContinualLearner learner(config.backbone, config.train);
    CHECK_THROWS_AS(learner.train_task(tasks[1]), std::invalid_argument);
    auto empty = tasks[0];
    empty.train = datasets::slice(empty.train, 0, 0);
    CHECK_THROWS_AS(learner.train_task(empty), std::invalid_argument);
    auto bad = config.train;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = config.train;
    bad.scheduler.factor = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK(accuracy_percent(std::vector<int>{1, 0, 1, 1}, std::vector<int>{1, 1, 1, 0}) == 50.0);
}

}
