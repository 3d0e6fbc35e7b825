#pragma once

// Accuracy bookkeeping across a task sequence and the ablation ladder runner.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "subnetcl/config.hpp"
#include "subnetcl/datasets.hpp"
#include "subnetcl/trainer.hpp"

namespace subnetcl::evalkit {

// R[t][j]: accuracy (percent) on task j after training task t, defined for j <= t.
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t tasks);

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    void set(std::size_t t, std::size_t j, double accuracy);
    bool has(std::size_t t, std::size_t j) const;
    double at(std::size_t t, std::size_t j) const;

    // Rows 0..t all filled.
    bool complete_through(std::size_t t) const;
    bool complete() const { return size_ > 0 && complete_through(size_ - 1); }
    // Number of leading rows that are fully filled.
    std::size_t rows_done() const;

    bool operator==(const AccuracyMatrix&) const = default;

private:
    std::size_t index(std::size_t t, std::size_t j) const;

    std::size_t size_ = 0;
    std::vector<double> values_;
    std::vector<unsigned char> filled_;
};

// Mean of the final row. Throws std::invalid_argument on an incomplete matrix.
double average_accuracy(const AccuracyMatrix& r);

// F[j] = max_{t>=j} R[t][j] - R[T-1][j] over the filled rows.
std::vector<double> forgetting(const AccuracyMatrix& r);

enum class IdRoute { oracle, inferred, latest };

std::string_view to_string(IdRoute route);

struct TaskEvaluation {
    double accuracy = 0.0;
    std::vector<int> predictions;
    // Task id whose mask and head produced each prediction.
    std::vector<std::size_t> routed;
    std::size_t routed_correctly = 0;
};

// Evaluates `data` (drawn from task `task`) on the learner's current state.
TaskEvaluation evaluate_task(const trainer::ContinualLearner& learner, const datasets::Dataset& data, std::size_t task,
                             IdRoute route, const taskid::DistanceConfig& distance = {});

// A full continual run: data built once from the config, one step per task,
// every seen task re-evaluated after each step.
class Experiment {
public:
    explicit Experiment(ExperimentConfig config);

    // Resumes from persisted state; the learner must have finished `oracle.rows_done()` tasks.
    Experiment(ExperimentConfig config, trainer::ContinualLearner learner, AccuracyMatrix oracle,
               AccuracyMatrix inferred, AccuracyMatrix latest, std::vector<std::vector<trainer::EpochMetrics>> epochs,
               std::vector<trainer::FrozenAudit> audits);

    bool finished() const { return learner_.tasks_done() == tasks_.size(); }
    trainer::TaskResult step();
    void run();

    const ExperimentConfig& config() const { return config_; }
    const std::vector<datasets::TaskData>& tasks() const { return tasks_; }
    const trainer::ContinualLearner& learner() const { return learner_; }

    const AccuracyMatrix& oracle() const { return oracle_; }
    // Domain-incremental only; empty otherwise.
    const AccuracyMatrix& inferred() const { return inferred_; }
    const AccuracyMatrix& latest() const { return latest_; }
    // The route a deployment would use: oracle ids in task mode, inferred ids
    // or the latest mask in domain mode depending on `infer_id`.
    IdRoute deployed_route() const;
    const AccuracyMatrix& deployed() const;

    // Per-task epoch logs, including tasks trained before a resume.
    const std::vector<std::vector<trainer::EpochMetrics>>& epochs() const { return epochs_; }
    // Per-task frozen-state audits, including tasks trained before a resume.
    const std::vector<trainer::FrozenAudit>& audits() const { return audits_; }

    // Predictions from the most recent deployed-route evaluation row.
    const std::vector<TaskEvaluation>& last_row() const { return last_row_; }

private:
    void evaluate_row(std::size_t t);

    ExperimentConfig config_;
    std::vector<datasets::TaskData> tasks_;
    trainer::ContinualLearner learner_;
    AccuracyMatrix oracle_;
    AccuracyMatrix inferred_;
    AccuracyMatrix latest_;
    std::vector<std::vector<trainer::EpochMetrics>> epochs_;
    std::vector<trainer::FrozenAudit> audits_;
    std::vector<TaskEvaluation> last_row_;
};

enum class Toggle { freeze_norm, infer_id, gradient_supplementation };

// Accepts "freeze-norm", "infer-id", "grad-supp". Throws std::invalid_argument otherwise.
Toggle parse_toggle(std::string_view text);
std::string_view to_string(Toggle toggle);
std::string_view row_label(Toggle toggle);

struct Rung {
    std::string label;
    std::vector<Toggle> enabled;
};

// Baseline, then one rung per toggle, each adding to the previous one.
std::vector<Rung> build_ladder(const std::vector<std::string>& toggles);
std::vector<Rung> standard_ladder();

// Baseline settings (no freezing, gamma = 1, latest-mask deployment) plus the rung's toggles.
ExperimentConfig apply_rung(const ExperimentConfig& base, const Rung& rung);

struct RungReport {
    std::string label;
    double average_accuracy = 0.0;  // deployed route
    double oracle_average = 0.0;
    std::optional<double> inferred_average;
    std::vector<double> forgetting;  // oracle-id matrix
    double max_forgetting = 0.0;
    AccuracyMatrix oracle;
    AccuracyMatrix deployed;
    bool audits_passed = true;
};

struct AblationReport {
    Scenario scenario = Scenario::domain_incremental;
    std::vector<RungReport> rungs;
};

AblationReport run_ablation(const ExperimentConfig& base, const std::vector<Rung>& ladder, bool parallel = true);

// Plain-text table with one row per rung.
std::string format_table(const AblationReport& report);

}  // namespace subnetcl::evalkit
