#pragma once

#include "clozefit/auto_label_search.hpp"
#include "clozefit/auto_template_gen.hpp"
#include "clozefit/dataset_io.hpp"
#include "clozefit/demonstrations.hpp"
#include "clozefit/eval_protocol.hpp"
#include "clozefit/report.hpp"
#include "clozefit/toy_backend.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clozefit {

// ---------------------------------------------------------------------------
// Training settings shared by every method

struct FitSettings {
    Grid grid;
    std::size_t max_steps = 1000;
    std::size_t eval_every = 100;
    Metric metric = Metric::accuracy;
};

struct FitResult {
    std::vector<TrialResult> trials;
    std::size_t best_index = 0;
    std::unique_ptr<Learner> best_model;
    double test_metric = 0.0;

    const TrialResult& best() const { return trials.at(best_index); }
};

/// Grid search with D_dev; without D_dev a single run of the fixed no-dev
/// configuration. The kept model is then scored on `test`.
FitResult fit_and_test(const Learner& initial, const FewShotSplit& split, std::span<const LabeledExample> test,
                       const FitSettings& settings);

// ---------------------------------------------------------------------------
// Baselines

enum class BaselineKind { majority, zero_shot, in_context, head_finetune };

BaselineKind parse_baseline_kind(std::string_view name);
std::string_view baseline_name(BaselineKind kind);

struct BaselineSpec {
    BaselineKind kind = BaselineKind::majority;
    std::size_t num_random_demos = 32; // in_context only
    double head_learning_rate_scale = 1e4;
};

struct BaselineOutcome {
    double test_metric = 0.0;
    std::optional<FitResult> fit; // head_finetune only
};

/// `backend` is never modified: zero-shot and in-context use it as is, and
/// head fine-tuning trains a head on a copy.
BaselineOutcome run_baseline(const BaselineSpec& spec, const FewShotSplit& split,
                             std::span<const LabeledExample> test, const Prompt& prompt, const TaskSpec& task,
                             const Backend& backend, const FitSettings& settings);

/// Class id of the most frequent training class (lower id on ties).
int majority_class(std::span<const LabeledExample> train, const TaskSpec& task);

/// In-context prediction: the query followed by `num_demos` random training
/// examples (drawn without replacement, filled with their label words),
/// truncated to the backend context.
std::vector<double> in_context_predict(std::span<const LabeledExample> queries, std::span<const LabeledExample> train,
                                       const Prompt& prompt, const TaskSpec& task, const Backend& backend,
                                       std::size_t num_demos, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Ensembles

/// `member_log_probs[m][i]` holds per-class log-probabilities of member m on
/// example i. Averages over members, then argmax (class id) or pole
/// interpolation (regression).
std::vector<double> ensemble_predictions(const std::vector<std::vector<std::vector<double>>>& member_log_probs,
                                         const TaskSpec& task);

struct EnsembleOutcome {
    double test_metric = 0.0;
    std::size_t members = 0; // survivors
};

/// One fine-tuned model per prompt; failed members are dropped.
EnsembleOutcome run_ensemble(std::span<const Prompt> prompts, const FewShotSplit& split,
                             std::span<const LabeledExample> test, const TaskSpec& task, const Backend& backend,
                             const FitSettings& settings, const std::optional<DemoSource>& demos = {});

// ---------------------------------------------------------------------------
// Full runs

enum class PromptSource { manual, auto_template, auto_label, auto_both };

PromptSource parse_prompt_source(std::string_view name);
std::string_view prompt_source_name(PromptSource source);

struct RunConfig {
    std::string task_name = "SST-2";
    std::filesystem::path train_path;
    std::filesystem::path test_path;
    std::filesystem::path prompt_path;
    std::size_t prompt_index = 0;
    std::filesystem::path generator_path; // required for template search
    std::optional<std::pair<double, double>> interval;
    std::vector<std::string> labels;
    std::optional<Metric> metric; // task preset, else accuracy

    PromptSource prompt_source = PromptSource::manual;
    bool demonstrations = false;
    DemoConfig demo;

    SearchConfig label_search;
    std::size_t beam_width = 100;
    std::size_t max_template_len = 20;
    SelectionMode template_selection = SelectionMode::best_one;
    std::size_t template_top_k = 20;

    Grid grid;
    std::size_t max_steps = 1000;
    std::size_t eval_every = 100;
    ProtocolConfig protocol;

    ToyMlmOptions toy;
    std::filesystem::path output_dir = "runs";
    bool record_wall_time = true;
    std::string method_label; // row name in reports; derived when empty

    /// Fills unset metric, interval and labels from a known task name.
    void apply_preset();
    void validate() const;
    Metric resolved_metric() const { return metric.value_or(Metric::accuracy); }
    std::string method() const;
    FitSettings fit_settings() const;
};

struct RunInputs {
    Dataset train;
    Dataset test;
    std::vector<PromptSpec> prompts;
    std::unique_ptr<ToyMaskedLm> backend;
    std::unique_ptr<ToyGenerator> generator; // null without a generator table
};

/// Loads data and prompts and builds the toy backend over their vocabulary.
RunInputs load_run_inputs(const RunConfig& config);

struct RunOutcome {
    ProtocolResult protocol;
    std::vector<ResultRecord> records; // seed order
    std::filesystem::path results_path;
};

/// The full multi-seed protocol for one method. Appends one record per
/// successful seed to `<output_dir>/results.jsonl`; search artifacts go to
/// `<output_dir>/<task>/seed-<seed>/`.
RunOutcome run_experiment(const RunConfig& config);
RunOutcome run_experiment(const RunConfig& config, const RunInputs& inputs);

/// The same protocol for a baseline.
RunOutcome run_baseline_protocol(const RunConfig& config, const BaselineSpec& spec);
RunOutcome run_baseline_protocol(const RunConfig& config, const BaselineSpec& spec, const RunInputs& inputs);

} // namespace clozefit
