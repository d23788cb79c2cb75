#pragma once

#include "clozefit/demonstrations.hpp"
#include "clozefit/model_backend.hpp"
#include "clozefit/prompt_inference.hpp"
#include "clozefit/task.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clozefit {

// ---------------------------------------------------------------------------
// Splits

struct FewShotSplit {
    std::uint64_t seed = 0;
    std::size_t k = 16;
    std::size_t dev_multiplier = 1;
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> dev;
};

/// K examples per class for D_train and dev_multiplier * K per class for
/// D_dev, drawn without replacement. Regression tasks sample per median bin.
FewShotSplit sample_split(const Dataset& dataset, std::size_t k, std::uint64_t seed, std::size_t dev_multiplier = 1);

/// Throws InvalidArgument when per-class counts or disjointness do not hold.
void validate_split(const FewShotSplit& split, const TaskSpec& task);

inline const std::vector<std::uint64_t>& default_seeds() {
    static const std::vector<std::uint64_t> seeds{13, 21, 42, 87, 100};
    return seeds;
}

// ---------------------------------------------------------------------------
// Metrics

enum class Metric { accuracy, f1, matthews, pearson };

Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric metric);
/// Column-header abbreviation, e.g. "acc".
std::string_view metric_abbreviation(Metric metric);

/// `predictions` and `golds` are class ids (classification metrics) or real
/// values (pearson). f1 scores `positive_class`.
double compute_metric(std::span<const double> predictions, std::span<const double> golds, Metric metric,
                      int positive_class = 1);

std::vector<double> gold_values(std::span<const LabeledExample> examples, const TaskSpec& task);

struct Summary {
    double mean = 0.0;
    double stddev = 0.0; // population
};

Summary summarize(std::span<const double> values);

// ---------------------------------------------------------------------------
// Training

struct HyperParams {
    double learning_rate = 1e-5;
    std::size_t batch_size = 8;
};

struct TrainConfig {
    HyperParams hyper;
    std::size_t max_steps = 1000;
    std::size_t eval_every = 100;
    std::uint64_t seed = 0;
};

/// Batch size 16, learning rate 1e-5, 250 steps: used when there is no D_dev.
TrainConfig no_dev_config(std::uint64_t seed);

struct Grid {
    std::vector<double> learning_rates{1e-5, 2e-5, 5e-5};
    std::vector<std::size_t> batch_sizes{2, 4, 8};

    /// Learning-rate-major order; this is also the tie-break order.
    std::vector<HyperParams> points() const;
};

/// A trainable predictor. Implementations own their parameters; `clone` is a
/// deep copy and doubles as the checkpoint mechanism.
class Learner {
public:
    virtual ~Learner() = default;

    virtual double train_step(std::span<const LabeledExample> batch, double learning_rate, Rng& rng) = 0;
    /// Class ids (classification) or values (regression). Deterministic in `seed`.
    virtual std::vector<double> predict(std::span<const LabeledExample> examples, std::uint64_t seed) const = 0;
    virtual std::unique_ptr<Learner> clone() const = 0;
    virtual std::size_t parameter_count() const = 0;
    virtual const TaskSpec& task() const = 0;
    /// Number of backend optimizer steps taken so far.
    virtual std::size_t steps_taken() const = 0;
};

/// Prompt-based fine-tuning: the backend itself is trained through the
/// verbalizer's label words.
class PromptLearner final : public Learner {
public:
    PromptLearner(std::unique_ptr<Backend> backend, PromptModel model);

    double train_step(std::span<const LabeledExample> batch, double learning_rate, Rng& rng) override;
    std::vector<double> predict(std::span<const LabeledExample> examples, std::uint64_t seed) const override;
    std::unique_ptr<Learner> clone() const override;
    std::size_t parameter_count() const override { return backend_->parameter_count(); }
    const TaskSpec& task() const override { return model_.task(); }
    std::size_t steps_taken() const override { return steps_; }

    const Backend& backend() const noexcept { return *backend_; }
    const PromptModel& model() const noexcept { return model_; }
    /// Per-class log-probabilities for each example (used by ensembles).
    std::vector<std::vector<double>> class_log_probs(std::span<const LabeledExample> examples,
                                                     std::uint64_t seed) const;

private:
    std::unique_ptr<Backend> backend_;
    PromptModel model_;
    std::size_t steps_ = 0;
};

/// Standard fine-tuning baseline: a new head over the backend's [CLS]
/// representation. The toy representation is fixed, so only the head learns.
class HeadLearner final : public Learner {
public:
    HeadLearner(std::unique_ptr<Backend> backend, TaskSpec task, std::uint64_t seed, double learning_rate_scale = 1.0);

    double train_step(std::span<const LabeledExample> batch, double learning_rate, Rng& rng) override;
    std::vector<double> predict(std::span<const LabeledExample> examples, std::uint64_t seed) const override;
    std::unique_ptr<Learner> clone() const override;
    std::size_t parameter_count() const override { return backend_->parameter_count() + head_.parameter_count(); }
    const TaskSpec& task() const override { return task_; }
    std::size_t steps_taken() const override { return steps_; }

    const BaselineHead& head() const noexcept { return head_; }
    const Backend& backend() const noexcept { return *backend_; }

private:
    std::vector<double> representation(const LabeledExample& example) const;

    std::shared_ptr<const Backend> backend_;
    TaskSpec task_;
    BaselineHead head_;
    double learning_rate_scale_;
    std::size_t steps_ = 0;
};

struct Checkpoint {
    std::size_t step = 0;
    double dev_metric = 0.0;
};

struct TrialResult {
    HyperParams hyper;
    std::uint64_t seed = 0;
    std::optional<double> dev_metric; // empty without D_dev
    std::optional<double> test_metric;
    std::size_t best_step = 0;
    std::vector<Checkpoint> history;
    std::optional<std::string> error;
};

struct TrainedTrial {
    TrialResult result;
    std::unique_ptr<Learner> best;
};

/// Trains a copy of `initial`, validating every `eval_every` steps and
/// keeping the best checkpoint (earliest on ties). Without D_dev the final
/// parameters are kept.
TrainedTrial train_trial(const Learner& initial, const FewShotSplit& split, const TrainConfig& config, Metric metric);

struct GridResult {
    std::vector<TrialResult> trials;
    std::size_t best_index = 0;
    std::unique_ptr<Learner> best_model;

    const TrialResult& best() const { return trials.at(best_index); }
};

/// One trial per grid point; the best dev metric wins, earlier grid order on
/// ties. When `test` is non-empty each trial's best checkpoint is scored on it.
GridResult grid_search(const Learner& initial, const FewShotSplit& split, const Grid& grid, const TrainConfig& base,
                       Metric metric, std::span<const LabeledExample> test = {});

/// Metric of `learner` on `examples`.
double evaluate(const Learner& learner, std::span<const LabeledExample> examples, Metric metric, std::uint64_t seed);

/// Dev metric of a prompt after fine-tuning a copy of `initial` on D_train.
/// Used to rank search candidates.
using PromptScorer = std::function<double(const Prompt& prompt)>;

PromptScorer make_fine_tune_scorer(const Backend& initial, const TaskSpec& task, const FewShotSplit& split,
                                   const TrainConfig& config, Metric metric);

// ---------------------------------------------------------------------------
// Multi-seed protocol

struct SeedResult {
    std::uint64_t seed = 0;
    bool ok = false;
    double test_metric = 0.0;
    std::string error;
};

struct ProtocolResult {
    Summary summary;
    std::size_t completed = 0;
    std::vector<SeedResult> per_seed;
};

struct ProtocolConfig {
    std::size_t k = 16;
    std::vector<std::uint64_t> seeds = default_seeds();
    std::size_t dev_multiplier = 1;
    std::size_t workers = 1;
};

/// Test metric of one seed's full pipeline run on its split.
using SeedPipeline = std::function<double(const FewShotSplit& split)>;

ProtocolResult run_protocol(const Dataset& dataset, const ProtocolConfig& config, const SeedPipeline& pipeline);

/// Runs fn(0..n-1) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

} // namespace clozefit
