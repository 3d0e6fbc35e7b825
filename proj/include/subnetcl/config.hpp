#pragma once

// Flat key-value experiment configuration with dotted section keys:
//
//   # comment
//   experiment.scenario = domain
//   trainer.epochs = 12
//
// Every experiment setting has exactly one key; the resolved configuration
// is echoed back in the same format so a run can be reproduced from it.

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "subnetcl/backbone.hpp"
#include "subnetcl/datasets.hpp"
#include "subnetcl/taskid.hpp"
#include "subnetcl/trainer.hpp"

namespace subnetcl {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FlatConfig {
public:
    static FlatConfig parse(std::string_view text);
    static FlatConfig load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return entries_; }

    // Sorted "key = value" lines.
    std::string to_text() const;

    bool operator==(const FlatConfig&) const = default;

private:
    std::map<std::string, std::string> entries_;
};

enum class Preset { desk, paper };

Preset parse_preset(std::string_view text);
std::string_view to_string(Preset preset);

struct ExperimentConfig {
    Preset preset = Preset::desk;
    datasets::TaskSequenceSpec data;
    BackboneConfig backbone;
    trainer::TrainConfig train;
    taskid::DistanceConfig distance;
    // Domain-incremental deployment: infer task ids (true) or use the latest task's mask.
    bool infer_id = true;

    Scenario scenario() const { return train.scenario; }

    FlatConfig to_flat() const;
    // Throws ConfigError naming the first unknown key or unparsable value.
    static ExperimentConfig from_flat(const FlatConfig& flat);

    // Fills backbone geometry/heads from the data spec and checks consistency.
    void finalize();
};

ExperimentConfig make_preset(Preset preset, Scenario scenario);

struct ConfigOverrides {
    std::optional<Preset> preset;
    std::optional<Scenario> scenario;
    std::optional<std::uint64_t> seed;
};

// Preset defaults for the resolved scenario, then the file's keys, then flags.
ExperimentConfig resolve_config(const FlatConfig& file, const ConfigOverrides& overrides);

std::string format_double(double value);

}  // namespace subnetcl
