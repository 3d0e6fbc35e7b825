#include "subnetcl/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "subnetcl/binio.hpp"
#include "subnetcl/checkpoint.hpp"
#include "subnetcl/config.hpp"
#include "subnetcl/evalkit.hpp"
#include "subnetcl/maskstore.hpp"

namespace subnetcl::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LogLevel { quiet, info, debug };

LogLevel log_level()
{
    const char* env = std::getenv("SUBNETCL_LOG");
    if (env == nullptr) {
        return LogLevel::info;
    }
    const std::string value(env);
    if (value == "quiet" || value == "0") {
        return LogLevel::quiet;
    }
    if (value == "debug" || value == "2") {
        return LogLevel::debug;
    }
    return LogLevel::info;
}

class Log {
public:
    explicit Log(std::ostream& sink) : sink_(sink), level_(log_level()) {}

    void info(const std::string& line) const { emit(LogLevel::info, line); }
    void debug(const std::string& line) const { emit(LogLevel::debug, line); }

private:
    void emit(LogLevel level, const std::string& line) const
    {
        if (static_cast<int>(level) <= static_cast<int>(level_)) {
            sink_ << line << '\n';
        }
    }

    std::ostream& sink_;
    LogLevel level_;
};

std::string fixed(double value, int digits = 2)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
    return buf;
}

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string scenario;
    std::string preset;
};

void add_common(CLI::App* cmd, CommonFlags& flags, const std::string& default_out)
{
    flags.out_dir = default_out;
    cmd->add_option("--config", flags.config_path, "Experiment config file (key = value lines)");
    cmd->add_option("--out", flags.out_dir, "Output directory");
    cmd->add_option("--seed", flags.seed, "Seed for data, initialization and batch order");
    cmd->add_option("--scenario", flags.scenario, "task|domain");
    cmd->add_option("--preset", flags.preset, "desk|paper");
}

ConfigOverrides overrides_from(const CommonFlags& flags)
{
    ConfigOverrides overrides;
    if (!flags.preset.empty()) {
        overrides.preset = parse_preset(flags.preset);
    }
    if (!flags.scenario.empty()) {
        try {
            overrides.scenario = parse_scenario(flags.scenario);
        } catch (const std::invalid_argument& err) {
            throw UsageError(err.what());
        }
    }
    overrides.seed = flags.seed;
    return overrides;
}

FlatConfig file_config(const CommonFlags& flags)
{
    return flags.config_path.empty() ? FlatConfig{} : FlatConfig::load(flags.config_path);
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    out << text;
}

json matrix_json(const evalkit::AccuracyMatrix& r)
{
    json rows = json::array();
    for (std::size_t t = 0; t < r.size(); ++t) {
        json row = json::array();
        for (std::size_t j = 0; j <= t; ++j) {
            row.push_back(r.has(t, j) ? json(r.at(t, j)) : json(nullptr));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json average_json(const evalkit::AccuracyMatrix& r)
{
    return r.complete() ? json(evalkit::average_accuracy(r)) : json(nullptr);
}

json mask_json(const maskstore::CompressedMaskBank& bank)
{
    const auto ratios = maskstore::storage_ratios(bank);
    json ones = json::array();
    for (std::size_t k = 0; k < bank.task_count(); ++k) {
        json row = json::array();
        for (const auto& layer : bank.extract(k)) {
            row.push_back(subnet::ones_count(layer));
        }
        ones.push_back(std::move(row));
    }
    return {{"tasks", bank.task_count()},
            {"planes", bank.plane_count()},
            {"elements", bank.element_total()},
            {"payload_bytes", bank.payload_bytes()},
            {"ratio_vs_float32", ratios.vs_float32},
            {"ratio_vs_uint8", ratios.vs_uint8},
            {"plane_capacity_ratio", ratios.plane_capacity},
            {"ones_per_layer", std::move(ones)}};
}

std::string metrics_csv(const evalkit::Experiment& experiment)
{
    std::string out = "task,epoch,lr,train_loss,train_accuracy,val_accuracy\n";
    const auto& epochs = experiment.epochs();
    for (std::size_t t = 0; t < epochs.size(); ++t) {
        for (const auto& e : epochs[t]) {
            out += std::to_string(t) + "," + std::to_string(e.epoch) + "," + format_double(e.lr) + ","
                   + format_double(e.train_loss) + "," + format_double(e.train_accuracy) + ","
                   + format_double(e.val_accuracy) + "\n";
        }
    }
    return out;
}

std::string accuracy_csv(const evalkit::Experiment& experiment)
{
    std::string out = "route,after_task,task,accuracy\n";
    auto emit = [&out](std::string_view route, const evalkit::AccuracyMatrix& r) {
        for (std::size_t t = 0; t < r.size(); ++t) {
            for (std::size_t j = 0; j <= t; ++j) {
                if (r.has(t, j)) {
                    out += std::string(route) + "," + std::to_string(t) + "," + std::to_string(j) + ","
                           + format_double(r.at(t, j)) + "\n";
                }
            }
        }
    };
    emit("oracle", experiment.oracle());
    if (!experiment.inferred().empty()) {
        emit("inferred", experiment.inferred());
        emit("latest", experiment.latest());
    }
    return out;
}

json summary_json(const evalkit::Experiment& experiment)
{
    const auto& config = experiment.config();
    json audits = json::array();
    for (std::size_t t = 0; t < experiment.audits().size(); ++t) {
        const auto& audit = experiment.audits()[t];
        audits.push_back({{"task", t}, {"passed", audit.passed()}, {"detail", audit.describe()}});
    }
    json summary = {
        {"scenario", std::string(to_string(config.scenario()))},
        {"preset", std::string(to_string(config.preset))},
        {"seed", config.train.seed},
        {"tasks_total", experiment.tasks().size()},
        {"tasks_done", experiment.learner().tasks_done()},
        {"deployed_route", std::string(evalkit::to_string(experiment.deployed_route()))},
        {"average_accuracy", average_json(experiment.deployed())},
        {"oracle_average_accuracy", average_json(experiment.oracle())},
        {"forgetting", evalkit::forgetting(experiment.oracle())},
        {"accuracy", {{"oracle", matrix_json(experiment.oracle())}}},
        {"audits", std::move(audits)},
        {"masks", mask_json(experiment.learner().masks())},
    };
    if (!experiment.inferred().empty()) {
        summary["inferred_average_accuracy"] = average_json(experiment.inferred());
        summary["latest_average_accuracy"] = average_json(experiment.latest());
        summary["accuracy"]["inferred"] = matrix_json(experiment.inferred());
        summary["accuracy"]["latest"] = matrix_json(experiment.latest());
    }
    return summary;
}

void write_outputs(const evalkit::Experiment& experiment, const fs::path& dir)
{
    checkpoint::save(experiment, dir / "checkpoint.smck");
    write_text(dir / "metrics.csv", metrics_csv(experiment));
    write_text(dir / "accuracy.csv", accuracy_csv(experiment));
    write_text(dir / "summary.json", summary_json(experiment).dump(2) + "\n");
    write_text(dir / "config.txt", experiment.config().to_flat().to_text());
}

void log_task(const Log& log, const evalkit::Experiment& experiment, const trainer::TaskResult& result)
{
    for (const auto& e : result.epochs) {
        log.debug("  epoch " + std::to_string(e.epoch) + " lr=" + format_double(e.lr) + " loss="
                  + fixed(e.train_loss, 4) + " train=" + fixed(e.train_accuracy) + " val=" + fixed(e.val_accuracy));
    }
    const std::size_t t = result.task_id;
    std::string row;
    for (std::size_t j = 0; j <= t; ++j) {
        row += " " + fixed(experiment.oracle().at(t, j));
    }
    log.info("task " + std::to_string(t) + " done: val=" + fixed(result.epochs.back().val_accuracy)
             + " oracle row:" + row + " audit: " + result.audit.describe());
}

// Diff of two flat configs, one "key: a -> b" per line.
std::string config_diff(const FlatConfig& stored, const FlatConfig& requested)
{
    std::string diff;
    for (const auto& [key, value] : requested.entries()) {
        const std::string old = stored.has(key) ? stored.get(key) : "<unset>";
        if (old != value) {
            diff += "  " + key + ": " + old + " -> " + value + "\n";
        }
    }
    return diff;
}

struct TrainFlags {
    CommonFlags common;
    std::string resume;
    bool dump_masks = false;
    std::optional<std::size_t> max_tasks;
};

int cmd_train(const TrainFlags& flags, std::ostream& out, const Log& log)
{
    const fs::path dir = flags.common.out_dir;
    std::optional<evalkit::Experiment> experiment;
    if (!flags.resume.empty()) {
        experiment.emplace(checkpoint::load(flags.resume));
        const FlatConfig stored = experiment->config().to_flat();
        FlatConfig requested = stored;
        for (const auto& [key, value] : file_config(flags.common).entries()) {
            requested.set(key, value);
        }
        const ExperimentConfig resolved = resolve_config(requested, overrides_from(flags.common));
        const FlatConfig resolved_flat = resolved.to_flat();
        if (!(resolved_flat == stored)) {
            throw UsageError("resume mismatch: requested configuration differs from the checkpoint\n"
                             + config_diff(stored, resolved_flat));
        }
        log.info("resuming at task " + std::to_string(experiment->learner().tasks_done()) + " of "
                 + std::to_string(experiment->tasks().size()));
    } else {
        experiment.emplace(resolve_config(file_config(flags.common), overrides_from(flags.common)));
    }
    fs::create_directories(dir);
    if (flags.dump_masks) {
        fs::create_directories(dir / "masks");
    }

    std::size_t trained = 0;
    while (!experiment->finished() && (!flags.max_tasks || trained < *flags.max_tasks)) {
        const auto result = experiment->step();
        ++trained;
        log_task(log, *experiment, result);
        if (!result.audit.passed()) {
            write_outputs(*experiment, dir);
            throw InvariantViolation("frozen-state audit failed after task " + std::to_string(result.task_id) + ": "
                                     + result.audit.describe());
        }
        if (flags.dump_masks) {
            const std::vector<MaskSet> single{result.masks};
            maskstore::save(maskstore::CompressedMaskBank::compress(single, experiment->learner().model().mask_shapes()),
                            dir / "masks" / ("task_" + std::to_string(result.task_id) + ".smcl"));
        }
        checkpoint::save(*experiment, dir / "checkpoint.smck");
    }
    write_outputs(*experiment, dir);

    const auto& deployed = experiment->deployed();
    out << "tasks: " << experiment->learner().tasks_done() << "/" << experiment->tasks().size() << "\n";
    if (deployed.complete()) {
        out << "average accuracy (" << evalkit::to_string(experiment->deployed_route())
            << " ids): " << fixed(evalkit::average_accuracy(deployed)) << "\n";
    }
    std::string forgetting;
    for (double f : evalkit::forgetting(experiment->oracle())) {
        forgetting += " " + fixed(f);
    }
    out << "forgetting:" << forgetting << "\n";
    out << "outputs written to " << dir.string() << "\n";
    return 0;
}

struct EvalFlags {
    std::string checkpoint;
    std::string scenario;
};

int cmd_eval(const EvalFlags& flags, std::ostream& out)
{
    const auto experiment = checkpoint::load(flags.checkpoint);
    const auto& config = experiment.config();
    if (!flags.scenario.empty() && parse_scenario(flags.scenario) != config.scenario()) {
        throw UsageError("scenario mismatch: checkpoint was trained in " + std::string(to_string(config.scenario()))
                         + " mode");
    }
    const std::size_t done = experiment.learner().tasks_done();
    if (done == 0) {
        throw UsageError("checkpoint holds no trained tasks");
    }
    const std::size_t last = done - 1;
    const auto& tasks = experiment.tasks();
    const bool domain = config.scenario() == Scenario::domain_incremental;

    bool matches = true;
    double oracle_sum = 0.0;
    double inferred_sum = 0.0;
    std::size_t id_hits = 0;
    std::size_t id_total = 0;
    out << "scenario: " << to_string(config.scenario()) << "  tasks: " << done << "/" << tasks.size() << "\n";
    out << (domain ? "task  oracle-id  inferred-id  id-accuracy\n" : "task  accuracy\n");
    for (std::size_t j = 0; j < done; ++j) {
        const auto oracle = evalkit::evaluate_task(experiment.learner(), tasks[j].test, j, evalkit::IdRoute::oracle,
                                                   config.distance);
        oracle_sum += oracle.accuracy;
        matches = matches && oracle.accuracy == experiment.oracle().at(last, j);
        if (domain) {
            const auto inferred = evalkit::evaluate_task(experiment.learner(), tasks[j].test, j,
                                                         evalkit::IdRoute::inferred, config.distance);
            inferred_sum += inferred.accuracy;
            matches = matches && inferred.accuracy == experiment.inferred().at(last, j);
            id_hits += inferred.routed_correctly;
            id_total += tasks[j].test.size();
            out << j << "     " << fixed(oracle.accuracy) << "      " << fixed(inferred.accuracy) << "        "
                << fixed(100.0 * static_cast<double>(inferred.routed_correctly)
                         / static_cast<double>(tasks[j].test.size()))
                << "\n";
        } else {
            out << j << "     " << fixed(oracle.accuracy) << "\n";
        }
    }
    const auto n = static_cast<double>(done);
    if (domain) {
        out << "average accuracy (inferred ids): " << fixed(inferred_sum / n) << "\n";
        out << "average accuracy (oracle ids): " << fixed(oracle_sum / n) << "\n";
        out << "oracle - inferred gap: " << fixed(oracle_sum / n - inferred_sum / n) << "\n";
        out << "task-id accuracy: " << fixed(100.0 * static_cast<double>(id_hits) / static_cast<double>(id_total))
            << "\n";
    } else {
        out << "average accuracy: " << fixed(oracle_sum / n) << "\n";
    }
    std::string forgetting;
    for (double f : evalkit::forgetting(experiment.oracle())) {
        forgetting += " " + fixed(f);
    }
    out << "forgetting:" << forgetting << "\n";
    out << "final row matches stored accuracy matrix: " << (matches ? "yes" : "NO") << "\n";
    if (!matches) {
        throw InvariantViolation("re-evaluation differs from the stored accuracy matrix");
    }
    return 0;
}

struct MasksFlags {
    std::string checkpoint;
    std::size_t task = 0;
    std::string out_file;
};

int cmd_masks_stats(const MasksFlags& flags, std::ostream& out)
{
    const auto experiment = checkpoint::load(flags.checkpoint);
    const auto& bank = experiment.learner().masks();
    const auto& model = experiment.learner().model();
    out << "tasks: " << bank.task_count() << "  planes: " << bank.plane_count()
        << "  elements: " << bank.element_total() << "\n";
    out << "layer";
    for (std::size_t k = 0; k < bank.task_count(); ++k) {
        out << "  task" << k;
    }
    out << "  size\n";
    std::vector<MaskSet> masks;
    for (std::size_t k = 0; k < bank.task_count(); ++k) {
        masks.push_back(bank.extract(k));
    }
    for (std::size_t l = 0; l < bank.layer_count(); ++l) {
        out << model.layer(l).name;
        for (const auto& m : masks) {
            out << "  " << subnet::ones_count(m[l]);
        }
        out << "  " << model.layer(l).size() << "\n";
    }
    const auto ratios = maskstore::storage_ratios(bank);
    out << "payload bytes: " << bank.payload_bytes()
        << "  header bytes: " << maskstore::header_bytes(bank.layer_shapes()) << "\n";
    out << "plane capacity ratio vs float32: " << fixed(ratios.plane_capacity, 1) << "x\n";
    out << "ratio vs float32 at " << bank.task_count() << " tasks: " << fixed(ratios.vs_float32, 1) << "x\n";
    out << "ratio vs uint8 at " << bank.task_count() << " tasks: " << fixed(ratios.vs_uint8, 1) << "x\n";
    return 0;
}

int cmd_masks_extract(const MasksFlags& flags, std::ostream& out)
{
    const auto experiment = checkpoint::load(flags.checkpoint);
    const auto& bank = experiment.learner().masks();
    if (flags.task >= bank.task_count()) {
        throw UsageError("task id " + std::to_string(flags.task) + " out of range (checkpoint holds "
                         + std::to_string(bank.task_count()) + " tasks)");
    }
    if (flags.out_file.empty()) {
        throw UsageError("masks extract needs --out FILE");
    }
    const std::vector<MaskSet> single{bank.extract(flags.task)};
    maskstore::save(maskstore::CompressedMaskBank::compress(single, bank.layer_shapes()), flags.out_file);
    out << "task " << flags.task << " mask written to " << flags.out_file << "\n";
    return 0;
}

int cmd_masks_verify(const MasksFlags& flags, std::ostream& out)
{
    const auto bytes = binio::read_file(flags.checkpoint);
    const auto experiment = checkpoint::decode(bytes);
    const auto& learner = experiment.learner();
    const auto& bank = learner.masks();
    std::vector<std::string> problems;

    if (auto issue = bank.audit(); !issue.empty()) {
        problems.push_back("mask bank audit: " + issue);
    }
    if (!(maskstore::deserialize(maskstore::serialize(bank)) == bank)) {
        problems.push_back("mask bank serialization roundtrip differs");
    }
    if (checkpoint::encode(experiment) != bytes) {
        problems.push_back("checkpoint re-encoding differs from the file");
    }
    std::vector<MaskSet> masks;
    subnet::CumulativeMask history(bank.layer_shapes());
    const auto& selection = learner.config().selection;
    for (std::size_t k = 0; k < bank.task_count(); ++k) {
        masks.push_back(bank.extract(k));
        history = history.merged(masks.back());
        if (selection.mode == subnet::SelectionMode::fixed_sparsity) {
            for (std::size_t l = 0; l < masks.back().size(); ++l) {
                const auto& layer = masks.back()[l];
                if (subnet::ones_count(layer) != subnet::topk_count(layer.size(), selection.sparsity)) {
                    problems.push_back("task " + std::to_string(k) + " layer " + std::to_string(l)
                                       + " ones-count differs from the sparsity budget");
                }
            }
        }
    }
    if (!(maskstore::CompressedMaskBank::compress(masks, bank.layer_shapes()) == bank)) {
        problems.push_back("recompressing the extracted masks does not reproduce the bank");
    }
    if (!(history == learner.history())) {
        problems.push_back("cumulative mask differs from the union of task masks");
    }
    if (learner.statistics().size() != bank.task_count()) {
        problems.push_back("statistics bank task count differs from the mask bank");
    }
    for (std::size_t t = 0; t < experiment.audits().size(); ++t) {
        if (!experiment.audits()[t].passed()) {
            problems.push_back("task " + std::to_string(t) + " audit failed: " + experiment.audits()[t].describe());
        }
    }
    const auto f = evalkit::forgetting(experiment.oracle());
    const bool frozen = experiment.config().train.freeze_norm;
    for (std::size_t j = 0; frozen && j < f.size(); ++j) {
        if (f[j] != 0.0) {
            problems.push_back("nonzero forgetting on task " + std::to_string(j) + " in a frozen run");
        }
    }
    for (const auto& p : problems) {
        out << "FAIL " << p << "\n";
    }
    if (!problems.empty()) {
        throw InvariantViolation(std::to_string(problems.size()) + " mask invariant violation(s)");
    }
    out << "ok: " << bank.task_count() << " task masks, " << bank.plane_count() << " plane(s), all checks passed\n";
    return 0;
}

struct InferFlags {
    std::string checkpoint;
    std::optional<std::size_t> limit;
};

int cmd_infer_id(const InferFlags& flags, std::ostream& out)
{
    const auto experiment = checkpoint::load(flags.checkpoint);
    const auto& learner = experiment.learner();
    const std::size_t done = learner.tasks_done();
    if (done == 0) {
        throw UsageError("checkpoint holds no trained tasks");
    }
    const auto first = learner.first_layer_masks();
    const auto& model = learner.model();
    model.reset_call_counters();
    std::vector<std::vector<std::size_t>> confusion(done, std::vector<std::size_t>(done, 0));
    std::size_t hits = 0;
    std::size_t total = 0;
    for (std::size_t j = 0; j < done; ++j) {
        auto data = experiment.tasks()[j].test;
        if (flags.limit && *flags.limit < data.size()) {
            data = datasets::slice(data, 0, *flags.limit);
        }
        const auto ids =
            taskid::infer_batch(model, data.inputs, learner.statistics(), first, experiment.config().distance);
        for (std::size_t id : ids) {
            ++confusion[j][id];
        }
        hits += confusion[j][j];
        total += ids.size();
    }
    std::uint64_t deeper = model.head_calls();
    for (std::size_t l = 1; l < model.maskable_count(); ++l) {
        deeper += model.layer_calls(l);
    }
    out << "true\\inferred";
    for (std::size_t k = 0; k < done; ++k) {
        out << "  " << k;
    }
    out << "\n";
    for (std::size_t j = 0; j < done; ++j) {
        out << j;
        for (std::size_t k = 0; k < done; ++k) {
            out << "  " << confusion[j][k];
        }
        out << "\n";
    }
    out << "task-id accuracy: " << fixed(100.0 * static_cast<double>(hits) / static_cast<double>(total)) << " ("
        << hits << "/" << total << ")\n";
    out << "first-layer calls: " << model.layer_calls(0) << "  deeper-layer calls: " << deeper << "\n";
    if (deeper != 0) {
        throw InvariantViolation("task-id inference reached layers beyond the first convolution");
    }
    return 0;
}

struct AblationFlags {
    CommonFlags common;
    std::string toggles = "freeze-norm,infer-id,grad-supp";
    bool serial = false;
};

int cmd_ablation(const AblationFlags& flags, std::ostream& out, const Log& log)
{
    auto overrides = overrides_from(flags.common);
    FlatConfig file = file_config(flags.common);
    if (!overrides.scenario && !file.has("experiment.scenario")) {
        overrides.scenario = Scenario::domain_incremental;
    }
    const ExperimentConfig base = resolve_config(file, overrides);
    std::vector<std::string> toggles;
    std::stringstream list(flags.toggles);
    for (std::string item; std::getline(list, item, ',');) {
        if (!item.empty()) {
            toggles.push_back(item);
        }
    }
    std::vector<evalkit::Rung> ladder;
    try {
        ladder = evalkit::build_ladder(toggles);
    } catch (const std::invalid_argument& err) {
        throw UsageError(err.what());
    }
    log.info("running " + std::to_string(ladder.size()) + " rungs on the " + std::string(to_string(base.scenario()))
             + " scenario");
    const auto report = evalkit::run_ablation(base, ladder, !flags.serial);
    const std::string table = evalkit::format_table(report);
    out << table;

    const fs::path dir = flags.common.out_dir;
    fs::create_directories(dir);
    std::string csv = "rung,label,average_accuracy,oracle_average,inferred_average,max_forgetting,audits_passed\n";
    json rungs = json::array();
    bool audits_ok = true;
    for (std::size_t i = 0; i < report.rungs.size(); ++i) {
        const auto& r = report.rungs[i];
        audits_ok = audits_ok && r.audits_passed;
        csv += std::to_string(i) + ",\"" + r.label + "\"," + format_double(r.average_accuracy) + ","
               + format_double(r.oracle_average) + ","
               + (r.inferred_average ? format_double(*r.inferred_average) : std::string()) + ","
               + format_double(r.max_forgetting) + "," + (r.audits_passed ? "true" : "false") + "\n";
        rungs.push_back({{"label", r.label},
                         {"average_accuracy", r.average_accuracy},
                         {"oracle_average_accuracy", r.oracle_average},
                         {"inferred_average_accuracy",
                          r.inferred_average ? json(*r.inferred_average) : json(nullptr)},
                         {"forgetting", r.forgetting},
                         {"max_forgetting", r.max_forgetting},
                         {"audits_passed", r.audits_passed},
                         {"accuracy", {{"oracle", matrix_json(r.oracle)}, {"deployed", matrix_json(r.deployed)}}}});
    }
    write_text(dir / "ablation.txt", table);
    write_text(dir / "ablation.csv", csv);
    write_text(dir / "ablation.json",
               json{{"scenario", std::string(to_string(report.scenario))},
                    {"config", base.to_flat().entries()},
                    {"rungs", std::move(rungs)}}
                       .dump(2)
                   + "\n");
    if (!audits_ok) {
        throw InvariantViolation("a frozen-state audit failed in one of the rungs");
    }
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Continual learning with per-task binary subnetworks"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    TrainFlags train;
    auto* train_cmd = app.add_subcommand("train", "Train the configured task sequence");
    add_common(train_cmd, train.common, "run");
    train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");
    train_cmd->add_flag("--dump-masks", train.dump_masks, "Write each task's mask to <out>/masks/ as it is finalized");
    train_cmd->add_option("--max-tasks", train.max_tasks, "Stop after training this many tasks in this invocation");

    EvalFlags eval;
    auto* eval_cmd = app.add_subcommand("eval", "Re-evaluate a checkpoint");
    eval_cmd->add_option("checkpoint", eval.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--scenario", eval.scenario, "Expected scenario (task|domain)");

    MasksFlags masks;
    auto* masks_cmd = app.add_subcommand("masks", "Inspect the compressed mask bank");
    masks_cmd->require_subcommand(1);
    auto* stats_cmd = masks_cmd->add_subcommand("stats", "Per-layer ones-counts and compression ratios");
    stats_cmd->add_option("checkpoint", masks.checkpoint, "Checkpoint file")->required();
    auto* extract_cmd = masks_cmd->add_subcommand("extract", "Write one task's mask to a mask container");
    extract_cmd->add_option("checkpoint", masks.checkpoint, "Checkpoint file")->required();
    extract_cmd->add_option("--task", masks.task, "Task id")->required();
    extract_cmd->add_option("--out", masks.out_file, "Output file")->required();
    auto* verify_cmd = masks_cmd->add_subcommand("verify", "Roundtrip and invariant audit");
    verify_cmd->add_option("checkpoint", masks.checkpoint, "Checkpoint file")->required();

    InferFlags infer;
    auto* infer_cmd = app.add_subcommand("infer-id", "Task-id inference on the stored test splits");
    infer_cmd->add_option("checkpoint", infer.checkpoint, "Checkpoint file")->required();
    infer_cmd->add_option("--limit", infer.limit, "Samples per task");

    AblationFlags ablation;
    auto* ablation_cmd = app.add_subcommand("ablation", "Run the cumulative ablation ladder");
    add_common(ablation_cmd, ablation.common, "ablation");
    ablation_cmd->add_option("--toggles", ablation.toggles, "Comma-separated toggles added rung by rung");
    ablation_cmd->add_flag("--serial", ablation.serial, "Run rungs one after another");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // CLI11's own exit codes are not part of the interface: usage errors are 2.
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    const Log log(err);
    try {
        if (train_cmd->parsed()) {
            return cmd_train(train, out, log);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval, out);
        }
        if (stats_cmd->parsed()) {
            return cmd_masks_stats(masks, out);
        }
        if (extract_cmd->parsed()) {
            return cmd_masks_extract(masks, out);
        }
        if (verify_cmd->parsed()) {
            return cmd_masks_verify(masks, out);
        }
        if (infer_cmd->parsed()) {
            return cmd_infer_id(infer, out);
        }
        if (ablation_cmd->parsed()) {
            return cmd_ablation(ablation, out, log);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvariantViolation& e) {
        err << "invariant violation: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace subnetcl::cli
