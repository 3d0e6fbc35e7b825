#include <doctest.h>

#include "subnetcl/config.hpp"

using namespace subnetcl;

TEST_SUITE("config") {

TEST_CASE("flat config parsing")
{
    const auto flat = FlatConfig::parse("# comment\n  trainer.epochs = 12  \n\nsubnet.gamma=2 # trailing\n");
    CHECK(flat.get("trainer.epochs") == "12");
    CHECK(flat.get("subnet.gamma") == "2");
    CHECK(flat.entries().size() == 2);
    CHECK_THROWS_AS(FlatConfig::parse("trainer.epochs\n"), ConfigError);
    CHECK_THROWS_AS(FlatConfig::parse("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(flat.get("missing"), ConfigError);
    CHECK(FlatConfig::parse(flat.to_text()) == flat);
}

TEST_CASE("unknown keys are rejected by name")
{
    try {
        (void)ExperimentConfig::from_flat(FlatConfig::parse("subnet.sparsityy = 0.5\n"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
        CHECK(std::string(err.what()).find("subnet.sparsityy") != std::string::npos);
    }
}

TEST_CASE("bad values name the key")
{
    for (const char* text : {"trainer.epochs = ten\n", "trainer.freeze_norm = maybe\n", "subnet.mode = random\n",
                             "data.domain_transform = blur\n", "experiment.scenario = both\n"}) {
        try {
            (void)ExperimentConfig::from_flat(FlatConfig::parse(text));
            FAIL("expected ConfigError for " << text);
        } catch (const ConfigError& err) {
            const std::string key(text, std::string(text).find(' '));
            CHECK(std::string(err.what()).find(key) != std::string::npos);
        }
    }
    CHECK_THROWS_AS(ExperimentConfig::from_flat(FlatConfig::parse("subnet.sparsity = 0\n")), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_flat(FlatConfig::parse("backbone.conv_channels = 4,4\n")), ConfigError);
}

TEST_CASE("echo roundtrip reproduces the configuration")
{
    for (auto preset : {Preset::desk, Preset::paper}) {
        for (auto scenario : {Scenario::task_incremental, Scenario::domain_incremental}) {
            const auto config = make_preset(preset, scenario);
            const auto flat = config.to_flat();
            const auto back = ExperimentConfig::from_flat(FlatConfig::parse(flat.to_text()));
            CHECK(back.to_flat() == flat);
        }
    }
    auto config = make_preset(Preset::desk, Scenario::domain_incremental);
    config.train.selection.mode = subnet::SelectionMode::dynamic_threshold;
    config.train.selection.layer_alpha = {0.3, 0.4, 0.5, 0.6};
    config.train.selection.gamma = 1.25;
    config.distance.mode = taskid::DistanceMode::scalar;
    config.data.transform = datasets::DomainTransform::rotation;
    config.train.weight_lr = 0.1 + 0.2;
    config.finalize();
    const auto back = ExperimentConfig::from_flat(config.to_flat());
    CHECK(back.to_flat() == config.to_flat());
    CHECK(back.train.weight_lr == config.train.weight_lr);
}

TEST_CASE("preset and head layout")
{
    const auto task = make_preset(Preset::desk, Scenario::task_incremental);
    CHECK(task.data.num_tasks == 5);
    CHECK(task.backbone.num_heads == 5);
    CHECK(task.backbone.num_classes == 2);
    const auto domain = make_preset(Preset::paper, Scenario::domain_incremental);
    CHECK(domain.backbone.num_heads == 1);
    CHECK(domain.backbone.num_classes == 4);
    CHECK(domain.train.epochs == 80);
    CHECK(parse_preset("paper") == Preset::paper);
    CHECK_THROWS_AS(parse_preset("huge"), ConfigError);
}

TEST_CASE("resolution order: preset, then file, then flags")
{
    const auto file = FlatConfig::parse("experiment.scenario = domain\ntrainer.epochs = 3\nexperiment.seed = 4\n");
    auto config = resolve_config(file, {});
    CHECK(config.scenario() == Scenario::domain_incremental);
    CHECK(config.train.epochs == 3);
    CHECK(config.train.seed == 4);
    CHECK(config.data.seed == 4);
    ConfigOverrides flags;
    flags.seed = 11;
    flags.scenario = Scenario::task_incremental;
    flags.preset = Preset::paper;
    config = resolve_config(file, flags);
    CHECK(config.scenario() == Scenario::task_incremental);
    CHECK(config.train.seed == 11);
    CHECK(config.train.epochs == 3);
    CHECK(config.train.weight_lr == 5e-5);
}

TEST_CASE("format_double is shortest round-trip")
{
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(3e-4 * 0.3) == format_double(3e-4 * 0.3));
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

}
