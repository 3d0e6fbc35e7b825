#include "subnetcl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <stdexcept>

namespace subnetcl::evalkit {

AccuracyMatrix::AccuracyMatrix(std::size_t tasks)
    : size_(tasks), values_(tasks * tasks, 0.0), filled_(tasks * tasks, 0)
{
}

std::size_t AccuracyMatrix::index(std::size_t t, std::size_t j) const
{
    if (t >= size_ || j > t) {
        throw std::out_of_range("accuracy matrix entry (" + std::to_string(t) + ", " + std::to_string(j)
                                + ") outside the lower triangle of a " + std::to_string(size_) + "-task matrix");
    }
    return t * size_ + j;
}

void AccuracyMatrix::set(std::size_t t, std::size_t j, double accuracy)
{
    if (!(accuracy >= 0.0 && accuracy <= 100.0)) {
        throw std::invalid_argument("accuracy must lie in [0, 100]");
    }
    const std::size_t i = index(t, j);
    values_[i] = accuracy;
    filled_[i] = 1;
}

bool AccuracyMatrix::has(std::size_t t, std::size_t j) const
{
    return filled_[index(t, j)] != 0;
}

double AccuracyMatrix::at(std::size_t t, std::size_t j) const
{
    const std::size_t i = index(t, j);
    if (filled_[i] == 0) {
        throw std::out_of_range("accuracy matrix entry (" + std::to_string(t) + ", " + std::to_string(j)
                                + ") not recorded");
    }
    return values_[i];
}

bool AccuracyMatrix::complete_through(std::size_t t) const
{
    if (t >= size_) {
        return false;
    }
    for (std::size_t row = 0; row <= t; ++row) {
        for (std::size_t j = 0; j <= row; ++j) {
            if (!has(row, j)) {
                return false;
            }
        }
    }
    return true;
}

std::size_t AccuracyMatrix::rows_done() const
{
    std::size_t rows = 0;
    while (rows < size_ && complete_through(rows)) {
        ++rows;
    }
    return rows;
}

double average_accuracy(const AccuracyMatrix& r)
{
    if (!r.complete()) {
        throw std::invalid_argument("average accuracy needs a complete accuracy matrix");
    }
    const std::size_t last = r.size() - 1;
    double sum = 0.0;
    for (std::size_t j = 0; j <= last; ++j) {
        sum += r.at(last, j);
    }
    return sum / static_cast<double>(r.size());
}

std::vector<double> forgetting(const AccuracyMatrix& r)
{
    const std::size_t rows = r.rows_done();
    if (rows == 0) {
        return {};
    }
    const std::size_t last = rows - 1;
    std::vector<double> out(rows, 0.0);
    for (std::size_t j = 0; j <= last; ++j) {
        double best = r.at(j, j);
        for (std::size_t t = j + 1; t <= last; ++t) {
            best = std::max(best, r.at(t, j));
        }
        out[j] = best - r.at(last, j);
    }
    return out;
}

std::string_view to_string(IdRoute route)
{
    switch (route) {
    case IdRoute::oracle:
        return "oracle";
    case IdRoute::inferred:
        return "inferred";
    case IdRoute::latest:
        return "latest";
    }
    return "oracle";
}

TaskEvaluation evaluate_task(const trainer::ContinualLearner& learner, const datasets::Dataset& data, std::size_t task,
                             IdRoute route, const taskid::DistanceConfig& distance)
{
    const std::size_t done = learner.tasks_done();
    if (done == 0) {
        throw std::invalid_argument("cannot evaluate before any task has been trained");
    }
    if (task >= done) {
        throw std::out_of_range("task " + std::to_string(task) + " has not been trained yet");
    }
    TaskEvaluation eval;
    const std::size_t n = data.size();
    if (route == IdRoute::oracle || route == IdRoute::latest) {
        const std::size_t k = route == IdRoute::oracle ? task : done - 1;
        eval.predictions = trainer::predict(learner.model(), data, learner.task_masks(k), learner.head_for(k));
        eval.routed.assign(n, k);
    } else {
        const auto first = learner.first_layer_masks();
        constexpr std::size_t chunk = 256;
        eval.routed.reserve(n);
        for (std::size_t start = 0; start < n; start += chunk) {
            const auto part = datasets::slice(data, start, std::min(chunk, n - start));
            const auto ids = taskid::infer_batch(learner.model(), part.inputs, learner.statistics(), first, distance);
            eval.routed.insert(eval.routed.end(), ids.begin(), ids.end());
        }
        std::map<std::size_t, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < n; ++i) {
            groups[eval.routed[i]].push_back(i);
        }
        eval.predictions.assign(n, 0);
        for (const auto& [k, idx] : groups) {
            const auto subset = datasets::gather(data, idx);
            const auto preds = trainer::predict(learner.model(), subset, learner.task_masks(k), learner.head_for(k));
            for (std::size_t i = 0; i < idx.size(); ++i) {
                eval.predictions[idx[i]] = preds[i];
            }
        }
    }
    eval.routed_correctly =
        static_cast<std::size_t>(std::count(eval.routed.begin(), eval.routed.end(), task));
    eval.accuracy = trainer::accuracy_percent(eval.predictions, data.labels);
    return eval;
}

Experiment::Experiment(ExperimentConfig config)
    : config_(std::move(config)),
      tasks_(datasets::build_sequence(config_.data)),
      learner_(config_.backbone, config_.train),
      oracle_(tasks_.size())
{
    if (config_.scenario() == Scenario::domain_incremental) {
        inferred_ = AccuracyMatrix(tasks_.size());
        latest_ = AccuracyMatrix(tasks_.size());
    }
}

Experiment::Experiment(ExperimentConfig config, trainer::ContinualLearner learner, AccuracyMatrix oracle,
                       AccuracyMatrix inferred, AccuracyMatrix latest,
                       std::vector<std::vector<trainer::EpochMetrics>> epochs,
                       std::vector<trainer::FrozenAudit> audits)
    : config_(std::move(config)),
      tasks_(datasets::build_sequence(config_.data)),
      learner_(std::move(learner)),
      oracle_(std::move(oracle)),
      inferred_(std::move(inferred)),
      latest_(std::move(latest)),
      epochs_(std::move(epochs)),
      audits_(std::move(audits))
{
    const std::size_t done = learner_.tasks_done();
    if (oracle_.size() != tasks_.size() || oracle_.rows_done() != done || epochs_.size() != done
        || audits_.size() != done) {
        throw std::invalid_argument("resume state does not match the configured task sequence");
    }
    if (config_.scenario() == Scenario::domain_incremental
        && (inferred_.size() != tasks_.size() || latest_.size() != tasks_.size())) {
        throw std::invalid_argument("resume state lacks domain-incremental accuracy matrices");
    }
    if (done > 0) {
        last_row_.clear();
        for (std::size_t j = 0; j < done; ++j) {
            last_row_.push_back(
                evaluate_task(learner_, tasks_[j].test, j, deployed_route(), config_.distance));
        }
    }
}

IdRoute Experiment::deployed_route() const
{
    if (config_.scenario() == Scenario::task_incremental) {
        return IdRoute::oracle;
    }
    return config_.infer_id ? IdRoute::inferred : IdRoute::latest;
}

const AccuracyMatrix& Experiment::deployed() const
{
    switch (deployed_route()) {
    case IdRoute::inferred:
        return inferred_;
    case IdRoute::latest:
        return latest_;
    case IdRoute::oracle:
        break;
    }
    return oracle_;
}

trainer::TaskResult Experiment::step()
{
    if (finished()) {
        throw std::logic_error("all tasks already trained");
    }
    const std::size_t t = learner_.tasks_done();
    auto result = learner_.train_task(tasks_[t]);
    epochs_.push_back(result.epochs);
    audits_.push_back(result.audit);
    evaluate_row(t);
    return result;
}

void Experiment::run()
{
    while (!finished()) {
        step();
    }
}

void Experiment::evaluate_row(std::size_t t)
{
    last_row_.clear();
    const IdRoute deploy = deployed_route();
    for (std::size_t j = 0; j <= t; ++j) {
        const auto& test = tasks_[j].test;
        auto oracle = evaluate_task(learner_, test, j, IdRoute::oracle, config_.distance);
        oracle_.set(t, j, oracle.accuracy);
        if (config_.scenario() == Scenario::domain_incremental) {
            auto inferred = evaluate_task(learner_, test, j, IdRoute::inferred, config_.distance);
            auto latest = evaluate_task(learner_, test, j, IdRoute::latest, config_.distance);
            inferred_.set(t, j, inferred.accuracy);
            latest_.set(t, j, latest.accuracy);
            if (deploy == IdRoute::inferred) {
                last_row_.push_back(std::move(inferred));
            } else {
                last_row_.push_back(std::move(latest));
            }
        } else {
            last_row_.push_back(std::move(oracle));
        }
    }
}

Toggle parse_toggle(std::string_view text)
{
    if (text == "freeze-norm") {
        return Toggle::freeze_norm;
    }
    if (text == "infer-id") {
        return Toggle::infer_id;
    }
    if (text == "grad-supp") {
        return Toggle::gradient_supplementation;
    }
    throw std::invalid_argument("unknown ablation toggle '" + std::string(text)
                                + "' (expected freeze-norm|infer-id|grad-supp)");
}

std::string_view to_string(Toggle toggle)
{
    switch (toggle) {
    case Toggle::freeze_norm:
        return "freeze-norm";
    case Toggle::infer_id:
        return "infer-id";
    case Toggle::gradient_supplementation:
        return "grad-supp";
    }
    return "freeze-norm";
}

std::string_view row_label(Toggle toggle)
{
    switch (toggle) {
    case Toggle::freeze_norm:
        return "+ Freeze batch normalization layers";
    case Toggle::infer_id:
        return "+ Infer task ID";
    case Toggle::gradient_supplementation:
        return "+ Gradient Supplementation";
    }
    return "";
}

std::vector<Rung> build_ladder(const std::vector<std::string>& toggles)
{
    std::vector<Rung> ladder;
    ladder.push_back({"WSN based Baseline", {}});
    for (const auto& name : toggles) {
        const Toggle toggle = parse_toggle(name);
        Rung rung = ladder.back();
        if (std::find(rung.enabled.begin(), rung.enabled.end(), toggle) != rung.enabled.end()) {
            throw std::invalid_argument("ablation toggle '" + name + "' listed twice");
        }
        rung.enabled.push_back(toggle);
        rung.label = std::string(row_label(toggle));
        ladder.push_back(std::move(rung));
    }
    return ladder;
}

std::vector<Rung> standard_ladder()
{
    return build_ladder({"freeze-norm", "infer-id", "grad-supp"});
}

ExperimentConfig apply_rung(const ExperimentConfig& base, const Rung& rung)
{
    ExperimentConfig config = base;
    config.train.freeze_norm = false;
    config.train.freeze_head = false;
    config.infer_id = false;
    config.train.selection.gamma = 1.0;
    for (Toggle toggle : rung.enabled) {
        switch (toggle) {
        case Toggle::freeze_norm:
            config.train.freeze_norm = true;
            config.train.freeze_head = true;
            break;
        case Toggle::infer_id:
            config.infer_id = true;
            break;
        case Toggle::gradient_supplementation:
            config.train.selection.gamma = base.train.selection.gamma;
            break;
        }
    }
    config.finalize();
    return config;
}

namespace {

RungReport run_rung(const ExperimentConfig& base, const Rung& rung)
{
    Experiment experiment(apply_rung(base, rung));
    experiment.run();
    RungReport report;
    report.label = rung.label;
    report.oracle = experiment.oracle();
    report.deployed = experiment.deployed();
    report.average_accuracy = average_accuracy(report.deployed);
    report.oracle_average = average_accuracy(report.oracle);
    if (!experiment.inferred().empty()) {
        report.inferred_average = average_accuracy(experiment.inferred());
    }
    report.forgetting = forgetting(report.oracle);
    report.max_forgetting = report.forgetting.empty()
                                ? 0.0
                                : *std::max_element(report.forgetting.begin(), report.forgetting.end());
    for (const auto& audit : experiment.audits()) {
        report.audits_passed = report.audits_passed && audit.passed();
    }
    return report;
}

}  // namespace

AblationReport run_ablation(const ExperimentConfig& base, const std::vector<Rung>& ladder, bool parallel)
{
    if (ladder.empty()) {
        throw std::invalid_argument("ablation ladder is empty");
    }
    AblationReport report;
    report.scenario = base.scenario();
    if (parallel) {
        std::vector<std::future<RungReport>> pending;
        for (const auto& rung : ladder) {
            pending.push_back(std::async(std::launch::async, run_rung, std::cref(base), std::cref(rung)));
        }
        for (auto& f : pending) {
            report.rungs.push_back(f.get());
        }
    } else {
        for (const auto& rung : ladder) {
            report.rungs.push_back(run_rung(base, rung));
        }
    }
    return report;
}

std::string format_table(const AblationReport& report)
{
    std::size_t width = 6;
    for (const auto& rung : report.rungs) {
        width = std::max(width, rung.label.size());
    }
    auto pad = [](std::string text, std::size_t n) {
        text.resize(std::max(text.size(), n), ' ');
        return text;
    };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };
    std::string out = pad("Method", width) + " | Average Accuracy | Oracle-ID | Inferred-ID | Max Forgetting\n";
    out += std::string(width, '-') + "-+------------------+-----------+-------------+---------------\n";
    for (const auto& rung : report.rungs) {
        out += pad(rung.label, width) + " | " + pad(num(rung.average_accuracy), 16) + " | "
               + pad(num(rung.oracle_average), 9) + " | "
               + pad(rung.inferred_average ? num(*rung.inferred_average) : "-", 11) + " | "
               + num(rung.max_forgetting) + "\n";
    }
    return out;
}

}  // namespace subnetcl::evalkit
