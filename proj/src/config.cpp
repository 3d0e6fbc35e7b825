#include "subnetcl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace subnetcl {

namespace {

std::string trim(std::string_view text)
{
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t\r");
    return std::string(text.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& value)
{
    double out = 0.0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
    }
    return out;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value)
{
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + value + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    throw ConfigError("config key '" + key + "': expected true|false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& format)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i != 0) {
            out += ",";
        }
        out += format(values[i]);
    }
    return out;
}

std::string format_unsigned(std::uint64_t value)
{
    return std::to_string(value);
}

}  // namespace

std::string format_double(double value)
{
    char buffer[64];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    if (ec != std::errc()) {
        throw std::runtime_error("cannot format number");
    }
    return std::string(buffer, ptr);
}

FlatConfig FlatConfig::parse(std::string_view text)
{
    FlatConfig config;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        std::string key = trim(std::string_view(stripped).substr(0, eq));
        std::string value = trim(std::string_view(stripped).substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        if (config.has(key)) {
            throw ConfigError("config key '" + key + "' given twice");
        }
        config.set(key, std::move(value));
    }
    return config;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str());
}

const std::string& FlatConfig::get(const std::string& key) const
{
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        throw ConfigError("missing config key '" + key + "'");
    }
    return it->second;
}

std::string FlatConfig::to_text() const
{
    std::string out;
    for (const auto& [key, value] : entries_) {
        out += key + " = " + value + "\n";
    }
    return out;
}

Preset parse_preset(std::string_view text)
{
    if (text == "desk") {
        return Preset::desk;
    }
    if (text == "paper") {
        return Preset::paper;
    }
    throw ConfigError("unknown preset '" + std::string(text) + "' (expected desk|paper)");
}

std::string_view to_string(Preset preset)
{
    return preset == Preset::desk ? "desk" : "paper";
}

ExperimentConfig make_preset(Preset preset, Scenario scenario)
{
    ExperimentConfig config;
    config.preset = preset;
    config.data.scenario = scenario;
    if (scenario == Scenario::task_incremental) {
        config.data.num_tasks = 5;
        config.data.num_classes = 10;
    } else {
        config.data.num_tasks = 4;
        config.data.num_classes = 4;
    }
    config.backbone.convs = {{8, 3, 1}, {16, 3, 2}, {16, 3, 2}};
    config.backbone.hidden = {32};
    config.train = preset == Preset::desk ? trainer::TrainConfig::desk_preset(scenario)
                                          : trainer::TrainConfig::paper_preset(scenario);
    config.train.seed = config.data.seed;
    config.finalize();
    return config;
}

void ExperimentConfig::finalize()
{
    data.scenario = train.scenario;
    backbone.scenario = train.scenario;
    backbone.in_channels = data.channels;
    backbone.height = data.height;
    backbone.width = data.width;
    data.validate();
    backbone.num_classes = data.classes_per_task();
    backbone.num_heads = train.scenario == Scenario::task_incremental ? data.num_tasks : 1;
    if (backbone.convs.empty()) {
        throw ConfigError("backbone needs at least one convolution (task-id inference taps the first one)");
    }
    backbone.validate();
    train.validate();
}

FlatConfig ExperimentConfig::to_flat() const
{
    FlatConfig flat;
    flat.set("experiment.preset", std::string(to_string(preset)));
    flat.set("experiment.scenario", std::string(to_string(train.scenario)));
    flat.set("experiment.seed", format_unsigned(train.seed));
    flat.set("experiment.num_tasks", format_unsigned(data.num_tasks));

    flat.set("data.num_classes", format_unsigned(data.num_classes));
    flat.set("data.train_samples", format_unsigned(data.train_samples));
    flat.set("data.test_samples", format_unsigned(data.test_samples));
    flat.set("data.val_fraction", format_double(data.val_fraction));
    flat.set("data.channels", format_unsigned(data.channels));
    flat.set("data.height", format_unsigned(data.height));
    flat.set("data.width", format_unsigned(data.width));
    flat.set("data.prototype_scale", format_double(data.prototype_scale));
    flat.set("data.noise", format_double(data.noise));
    flat.set("data.domain_transform", std::string(datasets::to_string(data.transform)));
    flat.set("data.domain_shift", format_double(data.domain_shift));

    flat.set("backbone.conv_channels",
             join(backbone.convs, [](const ConvSpec& c) { return format_unsigned(c.out_channels); }));
    flat.set("backbone.conv_strides", join(backbone.convs, [](const ConvSpec& c) { return format_unsigned(c.stride); }));
    flat.set("backbone.kernel", format_unsigned(backbone.convs.empty() ? 3 : backbone.convs.front().kernel));
    flat.set("backbone.hidden", join(backbone.hidden, format_unsigned));

    const auto& sel = train.selection;
    flat.set("subnet.mode", sel.mode == subnet::SelectionMode::fixed_sparsity ? "topk" : "threshold");
    flat.set("subnet.sparsity", format_double(sel.sparsity));
    flat.set("subnet.alpha", format_double(sel.alpha));
    flat.set("subnet.layer_alpha", join(sel.layer_alpha, format_double));
    flat.set("subnet.gamma", format_double(sel.gamma));
    flat.set("subnet.score_lr", format_double(sel.eta));
    flat.set("subnet.topk_fallback", sel.topk_fallback ? "true" : "false");

    flat.set("trainer.lr", format_double(train.weight_lr));
    flat.set("trainer.batch_size", format_unsigned(train.batch_size));
    flat.set("trainer.epochs", format_unsigned(train.epochs));
    flat.set("trainer.freeze_norm", train.freeze_norm ? "true" : "false");
    flat.set("trainer.freeze_head", train.freeze_head ? "true" : "false");
    flat.set("trainer.stats_chunk", format_unsigned(train.stats_chunk));

    flat.set("scheduler.factor", format_double(train.scheduler.factor));
    flat.set("scheduler.patience", format_unsigned(train.scheduler.patience));
    flat.set("scheduler.min_lr", format_double(train.scheduler.min_lr));
    flat.set("scheduler.threshold", format_double(train.scheduler.threshold));

    flat.set("taskid.infer", infer_id ? "true" : "false");
    flat.set("taskid.distance", distance.mode == taskid::DistanceMode::per_channel ? "channel" : "scalar");
    flat.set("taskid.mean_weight", format_double(distance.mean_weight));
    flat.set("taskid.variance_weight", format_double(distance.variance_weight));
    return flat;
}

ExperimentConfig ExperimentConfig::from_flat(const FlatConfig& flat)
{
    const Preset preset = flat.has("experiment.preset") ? parse_preset(flat.get("experiment.preset")) : Preset::desk;
    Scenario scenario = Scenario::task_incremental;
    if (flat.has("experiment.scenario")) {
        try {
            scenario = parse_scenario(flat.get("experiment.scenario"));
        } catch (const std::invalid_argument& err) {
            throw ConfigError(std::string("config key 'experiment.scenario': ") + err.what());
        }
    }
    ExperimentConfig config = make_preset(preset, scenario);
    std::vector<std::size_t> conv_channels;
    std::vector<std::size_t> conv_strides;
    for (const auto& conv : config.backbone.convs) {
        conv_channels.push_back(conv.out_channels);
        conv_strides.push_back(conv.stride);
    }
    std::size_t kernel = config.backbone.convs.front().kernel;

    using Setter = std::function<void(const std::string&, const std::string&)>;
    auto unsigned_into = [](auto& field) -> Setter {
        return [&field](const std::string& k, const std::string& v) {
            field = static_cast<std::remove_reference_t<decltype(field)>>(parse_unsigned(k, v));
        };
    };
    auto double_into = [](double& field) -> Setter {
        return [&field](const std::string& k, const std::string& v) { field = parse_double(k, v); };
    };
    auto bool_into = [](bool& field) -> Setter {
        return [&field](const std::string& k, const std::string& v) { field = parse_bool(k, v); };
    };
    auto size_list_into = [](std::vector<std::size_t>& field) -> Setter {
        return [&field](const std::string& k, const std::string& v) {
            field.clear();
            for (const auto& item : split_list(v)) {
                field.push_back(static_cast<std::size_t>(parse_unsigned(k, item)));
            }
        };
    };

    auto& data = config.data;
    auto& train = config.train;
    auto& sel = train.selection;
    const std::map<std::string, Setter> setters = {
        {"experiment.preset", [](const std::string&, const std::string&) {}},
        {"experiment.scenario", [](const std::string&, const std::string&) {}},
        {"experiment.seed",
         [&](const std::string& k, const std::string& v) {
             train.seed = parse_unsigned(k, v);
             data.seed = train.seed;
         }},
        {"experiment.num_tasks", unsigned_into(data.num_tasks)},
        {"data.num_classes", unsigned_into(data.num_classes)},
        {"data.train_samples", unsigned_into(data.train_samples)},
        {"data.test_samples", unsigned_into(data.test_samples)},
        {"data.val_fraction", double_into(data.val_fraction)},
        {"data.channels", unsigned_into(data.channels)},
        {"data.height", unsigned_into(data.height)},
        {"data.width", unsigned_into(data.width)},
        {"data.prototype_scale", double_into(data.prototype_scale)},
        {"data.noise", double_into(data.noise)},
        {"data.domain_transform",
         [&](const std::string& k, const std::string& v) {
             try {
                 data.transform = datasets::parse_domain_transform(v);
             } catch (const std::invalid_argument& err) {
                 throw ConfigError("config key '" + k + "': " + err.what());
             }
         }},
        {"data.domain_shift", double_into(data.domain_shift)},
        {"backbone.conv_channels", size_list_into(conv_channels)},
        {"backbone.conv_strides", size_list_into(conv_strides)},
        {"backbone.kernel", unsigned_into(kernel)},
        {"backbone.hidden", size_list_into(config.backbone.hidden)},
        {"subnet.mode",
         [&](const std::string& k, const std::string& v) {
             if (v == "topk") {
                 sel.mode = subnet::SelectionMode::fixed_sparsity;
             } else if (v == "threshold") {
                 sel.mode = subnet::SelectionMode::dynamic_threshold;
             } else {
                 throw ConfigError("config key '" + k + "': expected topk|threshold, got '" + v + "'");
             }
         }},
        {"subnet.sparsity", double_into(sel.sparsity)},
        {"subnet.alpha", double_into(sel.alpha)},
        {"subnet.layer_alpha",
         [&](const std::string& k, const std::string& v) {
             sel.layer_alpha.clear();
             for (const auto& item : split_list(v)) {
                 sel.layer_alpha.push_back(parse_double(k, item));
             }
         }},
        {"subnet.gamma", double_into(sel.gamma)},
        {"subnet.score_lr", double_into(sel.eta)},
        {"subnet.topk_fallback", bool_into(sel.topk_fallback)},
        {"trainer.lr", double_into(train.weight_lr)},
        {"trainer.batch_size", unsigned_into(train.batch_size)},
        {"trainer.epochs", unsigned_into(train.epochs)},
        {"trainer.freeze_norm", bool_into(train.freeze_norm)},
        {"trainer.freeze_head", bool_into(train.freeze_head)},
        {"trainer.stats_chunk", unsigned_into(train.stats_chunk)},
        {"scheduler.factor", double_into(train.scheduler.factor)},
        {"scheduler.patience", unsigned_into(train.scheduler.patience)},
        {"scheduler.min_lr", double_into(train.scheduler.min_lr)},
        {"scheduler.threshold", double_into(train.scheduler.threshold)},
        {"taskid.infer", bool_into(config.infer_id)},
        {"taskid.distance",
         [&](const std::string& k, const std::string& v) {
             if (v == "channel") {
                 config.distance.mode = taskid::DistanceMode::per_channel;
             } else if (v == "scalar") {
                 config.distance.mode = taskid::DistanceMode::scalar;
             } else {
                 throw ConfigError("config key '" + k + "': expected channel|scalar, got '" + v + "'");
             }
         }},
        {"taskid.mean_weight", double_into(config.distance.mean_weight)},
        {"taskid.variance_weight", double_into(config.distance.variance_weight)},
    };

    for (const auto& [key, value] : flat.entries()) {
        auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        it->second(key, value);
    }

    if (conv_channels.size() != conv_strides.size()) {
        throw ConfigError("backbone.conv_channels and backbone.conv_strides must have the same length");
    }
    config.backbone.convs.clear();
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        config.backbone.convs.push_back({conv_channels[i], kernel, conv_strides[i]});
    }
    try {
        config.finalize();
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("invalid configuration: ") + err.what());
    }
    return config;
}

ExperimentConfig resolve_config(const FlatConfig& file, const ConfigOverrides& overrides)
{
    FlatConfig merged = file;
    if (overrides.preset) {
        merged.set("experiment.preset", std::string(to_string(*overrides.preset)));
    }
    if (overrides.scenario) {
        merged.set("experiment.scenario", std::string(to_string(*overrides.scenario)));
    }
    if (overrides.seed) {
        merged.set("experiment.seed", format_unsigned(*overrides.seed));
    }
    return ExperimentConfig::from_flat(merged);
}

}  // namespace subnetcl
