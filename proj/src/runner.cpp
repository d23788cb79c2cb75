#include "clozefit/runner.hpp"

#include "clozefit/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>

namespace clozefit {

namespace {

constexpr std::uint64_t kTestSeedSalt = 0x7e577e57ULL;

std::string describe(const Prompt& prompt) {
    std::string out = prompt.pattern.serialize() + " |";
    for (std::size_t i = 0; i < prompt.verbalizer.size(); ++i) {
        out += (i ? "/" : " ") + prompt.verbalizer.word(static_cast<int>(i));
    }
    return out;
}

std::string path_safe(std::string name) {
    for (char& c : name) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    return name;
}

Prompt manual_prompt(const RunConfig& config, const RunInputs& inputs) {
    if (inputs.prompts.empty()) throw Error(ErrorCode::InvalidArgument, "this method needs a prompt file");
    if (config.prompt_index >= inputs.prompts.size()) {
        throw Error(ErrorCode::InvalidArgument, "prompt index " + std::to_string(config.prompt_index) +
                                                    " out of range (" + std::to_string(inputs.prompts.size()) +
                                                    " prompts)");
    }
    const auto& spec = inputs.prompts[config.prompt_index];
    return Prompt{spec.pattern, bind_verbalizer(spec.label_words, inputs.train.task.labels)};
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<ResultRecord> trial_records(const FitResult& fit, const std::string& method) {
    std::vector<ResultRecord> out;
    for (const auto& t : fit.trials) {
        if (t.error) continue;
        ResultRecord r;
        r.kind = "trial";
        r.method = method;
        r.hyper = t.hyper;
        r.best_step = t.best_step;
        r.dev_metric = t.dev_metric;
        out.push_back(std::move(r));
    }
    return out;
}

// Per seed: trial records first, the seed record last.
using SeedRecords = std::vector<ResultRecord>;

RunOutcome run_seeds(const RunConfig& config, const RunInputs& inputs,
                     const std::function<SeedRecords(const FewShotSplit&)>& per_seed) {
    std::vector<std::optional<SeedRecords>> slots(config.protocol.seeds.size());
    std::mutex slots_mutex;
    RunOutcome outcome;
    outcome.protocol = run_protocol(inputs.train, config.protocol, [&](const FewShotSplit& split) {
        const auto start = std::chrono::steady_clock::now();
        auto records = per_seed(split);
        const double wall = elapsed_seconds(start);
        for (auto& record : records) {
            record.task = config.task_name;
            record.metric = std::string(metric_name(config.resolved_metric()));
            record.seed = split.seed;
        }
        auto& record = records.back();
        if (config.record_wall_time) record.wall_time = wall;
        const double test_metric = record.test_metric;
        const auto pos = static_cast<std::size_t>(
            std::find(config.protocol.seeds.begin(), config.protocol.seeds.end(), split.seed) -
            config.protocol.seeds.begin());
        const std::lock_guard lock(slots_mutex);
        slots.at(pos) = std::move(records);
        return test_metric;
    });
    std::vector<ResultRecord> log;
    for (auto& slot : slots) {
        if (!slot) continue;
        log.insert(log.end(), slot->begin(), slot->end());
        outcome.records.push_back(slot->back());
    }
    outcome.results_path = config.output_dir / "results.jsonl";
    append_results(outcome.results_path, log);
    return outcome;
}

} // namespace

// ---------------------------------------------------------------------------

FitResult fit_and_test(const Learner& initial, const FewShotSplit& split, std::span<const LabeledExample> test,
                       const FitSettings& settings) {
    FitResult fit;
    if (split.dev.empty()) {
        auto trial = train_trial(initial, split, no_dev_config(split.seed), settings.metric);
        fit.trials.push_back(trial.result);
        fit.best_model = std::move(trial.best);
    } else {
        TrainConfig base;
        base.max_steps = settings.max_steps;
        base.eval_every = settings.eval_every;
        base.seed = split.seed;
        auto grid = grid_search(initial, split, settings.grid, base, settings.metric);
        fit.trials = std::move(grid.trials);
        fit.best_index = grid.best_index;
        fit.best_model = std::move(grid.best_model);
    }
    if (!test.empty()) fit.test_metric = evaluate(*fit.best_model, test, settings.metric, split.seed ^ kTestSeedSalt);
    return fit;
}

// ---------------------------------------------------------------------------
// Baselines

BaselineKind parse_baseline_kind(std::string_view name) {
    if (name == "majority") return BaselineKind::majority;
    if (name == "zero_shot" || name == "zero-shot") return BaselineKind::zero_shot;
    if (name == "in_context" || name == "in-context") return BaselineKind::in_context;
    if (name == "head_finetune" || name == "fine-tuning") return BaselineKind::head_finetune;
    throw Error(ErrorCode::InvalidArgument, "unknown baseline '" + std::string(name) + "'");
}

std::string_view baseline_name(BaselineKind kind) {
    switch (kind) {
    case BaselineKind::majority: return "majority";
    case BaselineKind::zero_shot: return "zero_shot";
    case BaselineKind::in_context: return "in_context";
    case BaselineKind::head_finetune: return "head_finetune";
    }
    return "?";
}

int majority_class(std::span<const LabeledExample> train, const TaskSpec& task) {
    if (train.empty()) throw Error(ErrorCode::EmptyInput, "no training examples");
    std::vector<std::size_t> counts(task.num_classes(), 0);
    for (const auto& ex : train) ++counts[static_cast<std::size_t>(task.class_of(ex))];
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<double> in_context_predict(std::span<const LabeledExample> queries, std::span<const LabeledExample> train,
                                       const Prompt& prompt, const TaskSpec& task, const Backend& backend,
                                       std::size_t num_demos, std::uint64_t seed) {
    const auto label_tokens = resolve_label_tokens(prompt.verbalizer, backend);
    const std::size_t max_len = backend.capabilities().max_input_length;
    Rng rng(seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> out;
    out.reserve(queries.size());
    for (const auto& query : queries) {
        rng.shuffle(order);
        std::vector<const LabeledExample*> demos;
        for (std::size_t i = 0; i < std::min(num_demos, order.size()); ++i) {
            const auto* ex = &train[order[i]];
            if (ex->id != query.id) demos.push_back(ex);
        }
        const auto context = build_context(query, demos, prompt, task, backend, max_len);
        const auto dist = class_probabilities(backend.mask_logits(context.text()), label_tokens);
        if (task.is_regression()) {
            const auto& spec = task.regression_spec();
            out.push_back(regression_predict(dist[static_cast<std::size_t>(spec.upper_class)], spec));
        } else {
            out.push_back(static_cast<double>(dist.argmax()));
        }
    }
    return out;
}

BaselineOutcome run_baseline(const BaselineSpec& spec, const FewShotSplit& split,
                             std::span<const LabeledExample> test, const Prompt& prompt, const TaskSpec& task,
                             const Backend& backend, const FitSettings& settings) {
    if (test.empty()) throw Error(ErrorCode::EmptyInput, "no test examples");
    const auto golds = gold_values(test, task);
    BaselineOutcome outcome;
    switch (spec.kind) {
    case BaselineKind::majority: {
        double constant = 0.0;
        if (task.is_regression()) {
            constant = task.median;
        } else {
            constant = static_cast<double>(majority_class(split.train, task));
        }
        const std::vector<double> predictions(test.size(), constant);
        outcome.test_metric = compute_metric(predictions, golds, settings.metric);
        break;
    }
    case BaselineKind::zero_shot: {
        const PromptLearner learner(backend.clone(), PromptModel(task, prompt, backend));
        outcome.test_metric = evaluate(learner, test, settings.metric, split.seed ^ kTestSeedSalt);
        break;
    }
    case BaselineKind::in_context: {
        const auto predictions =
            in_context_predict(test, split.train, prompt, task, backend, spec.num_random_demos, split.seed);
        outcome.test_metric = compute_metric(predictions, golds, settings.metric);
        break;
    }
    case BaselineKind::head_finetune: {
        const HeadLearner learner(backend.clone(), task, split.seed, spec.head_learning_rate_scale);
        auto fit = fit_and_test(learner, split, test, settings);
        outcome.test_metric = fit.test_metric;
        outcome.fit = std::move(fit);
        break;
    }
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// Ensembles

std::vector<double> ensemble_predictions(const std::vector<std::vector<std::vector<double>>>& member_log_probs,
                                         const TaskSpec& task) {
    if (member_log_probs.empty()) throw Error(ErrorCode::EmptyInput, "ensemble without members");
    const std::size_t n = member_log_probs.front().size();
    for (const auto& member : member_log_probs) {
        if (member.size() != n) throw Error(ErrorCode::ShapeError, "ensemble members scored different example counts");
    }
    const auto members = static_cast<double>(member_log_probs.size());
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> mean(member_log_probs.front()[i].size(), 0.0);
        for (const auto& member : member_log_probs) {
            if (member[i].size() != mean.size()) throw Error(ErrorCode::ShapeError, "class counts differ");
            for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += member[i][c] / members;
        }
        if (task.is_regression()) {
            const auto& spec = task.regression_spec();
            const double lo = mean[static_cast<std::size_t>(spec.lower_class)];
            const double hi = mean[static_cast<std::size_t>(spec.upper_class)];
            const double p_upper = 1.0 / (1.0 + std::exp(lo - hi));
            out.push_back(regression_predict(p_upper, spec));
        } else {
            out.push_back(static_cast<double>(std::max_element(mean.begin(), mean.end()) - mean.begin()));
        }
    }
    return out;
}

EnsembleOutcome run_ensemble(std::span<const Prompt> prompts, const FewShotSplit& split,
                             std::span<const LabeledExample> test, const TaskSpec& task, const Backend& backend,
                             const FitSettings& settings, const std::optional<DemoSource>& demos) {
    if (prompts.empty()) throw Error(ErrorCode::InvalidArgument, "ensemble needs at least one template");
    std::vector<std::vector<std::vector<double>>> member_log_probs;
    for (std::size_t m = 0; m < prompts.size(); ++m) {
        try {
            const PromptLearner initial(backend.clone(), PromptModel(task, prompts[m], backend, demos));
            auto fit = fit_and_test(initial, split, {}, settings);
            const auto& learner = dynamic_cast<const PromptLearner&>(*fit.best_model);
            member_log_probs.push_back(learner.class_log_probs(test, split.seed ^ kTestSeedSalt));
        } catch (const std::exception& e) {
            spdlog::warn("ensemble member {} ('{}') dropped: {}", m, prompts[m].pattern.serialize(), e.what());
        }
    }
    if (member_log_probs.empty()) throw Error(ErrorCode::NoSuccessfulTrial, "every ensemble member failed");
    const auto predictions = ensemble_predictions(member_log_probs, task);
    return {compute_metric(predictions, gold_values(test, task), settings.metric), member_log_probs.size()};
}

// ---------------------------------------------------------------------------
// Full runs

PromptSource parse_prompt_source(std::string_view name) {
    if (name == "manual") return PromptSource::manual;
    if (name == "auto_template") return PromptSource::auto_template;
    if (name == "auto_label") return PromptSource::auto_label;
    if (name == "auto_both") return PromptSource::auto_both;
    throw Error(ErrorCode::InvalidArgument, "unknown prompt source '" + std::string(name) + "'");
}

std::string_view prompt_source_name(PromptSource source) {
    switch (source) {
    case PromptSource::manual: return "manual";
    case PromptSource::auto_template: return "auto_template";
    case PromptSource::auto_label: return "auto_label";
    case PromptSource::auto_both: return "auto_both";
    }
    return "?";
}

void RunConfig::apply_preset() {
    const auto preset = find_task_preset(task_name);
    if (!preset) return;
    if (!metric) metric = preset->metric;
    if (!interval) interval = preset->interval;
    if (labels.empty() && !interval) labels = preset->labels;
}

void RunConfig::validate() const {
    if (train_path.empty()) throw Error(ErrorCode::InvalidArgument, "no training file given");
    if (test_path.empty()) throw Error(ErrorCode::InvalidArgument, "no test file given");
    if (protocol.k == 0) throw Error(ErrorCode::InvalidArgument, "K must be positive");
    if (protocol.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "at least one seed is required");
    if (beam_width == 0 || max_template_len == 0) throw Error(ErrorCode::InvalidArgument, "beam settings must be positive");
    if (grid.learning_rates.empty() || grid.batch_sizes.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty hyper-parameter grid");
    }
    demo.validate();
    label_search.validate();
    const bool needs_generator =
        prompt_source == PromptSource::auto_template || prompt_source == PromptSource::auto_both;
    if (needs_generator && generator_path.empty()) {
        throw Error(ErrorCode::InvalidArgument, "template search needs a generator table");
    }
}

std::string RunConfig::method() const {
    if (!method_label.empty()) return method_label;
    std::string out = "prompt-based FT";
    switch (prompt_source) {
    case PromptSource::manual: out += " (man)"; break;
    case PromptSource::auto_template:
        out += template_selection == SelectionMode::top_k_ensemble ? " (auto T, ensemble)" : " (auto T)";
        break;
    case PromptSource::auto_label: out += " (auto L)"; break;
    case PromptSource::auto_both: out += " (auto T + L)"; break;
    }
    if (demonstrations) out += " + demos";
    return out;
}

FitSettings RunConfig::fit_settings() const { return {grid, max_steps, eval_every, resolved_metric()}; }

RunInputs load_run_inputs(const RunConfig& config) {
    RunInputs inputs;
    DatasetSchema schema{config.task_name, config.interval, config.labels};
    inputs.train = load_dataset(config.train_path, schema);
    inputs.test = load_dataset(config.test_path, inputs.train.task);
    if (!config.prompt_path.empty()) inputs.prompts = read_prompt_file(config.prompt_path);

    std::vector<std::string> words;
    for (const auto* ds : {&inputs.train, &inputs.test}) {
        for (const auto& ex : ds->examples) {
            words.push_back(ex.sentence1);
            if (ex.sentence2) words.push_back(*ex.sentence2);
        }
    }
    for (const auto& spec : inputs.prompts) {
        for (const auto& part : spec.pattern.parts()) {
            if (const auto* lit = std::get_if<Literal>(&part)) words.push_back(lit->text);
        }
        for (const auto& [label, word] : spec.label_words) words.push_back(word);
    }
    inputs.backend = std::make_unique<ToyMaskedLm>(words, config.toy);
    if (!config.generator_path.empty()) {
        inputs.generator = std::make_unique<ToyGenerator>(ToyGenerator::from_json_file(config.generator_path));
    }
    return inputs;
}

RunOutcome run_experiment(const RunConfig& config) {
    config.validate();
    return run_experiment(config, load_run_inputs(config));
}

RunOutcome run_experiment(const RunConfig& config, const RunInputs& inputs) {
    config.validate();
    const auto& task = inputs.train.task;
    const auto& backend = *inputs.backend;
    const auto settings = config.fit_settings();
    const auto manual = manual_prompt(config, inputs);
    const HashBagEncoder encoder;

    return run_seeds(config, inputs, [&](const FewShotSplit& split) {
        const auto seed_dir = config.output_dir / path_safe(config.task_name) / ("seed-" + std::to_string(split.seed));
        TrainConfig search_train;
        search_train.hyper = config.label_search.search_hyper;
        search_train.max_steps = config.label_search.max_steps;
        search_train.eval_every = config.label_search.eval_every;
        search_train.seed = split.seed;

        std::vector<Prompt> prompts{manual};
        const auto source = config.prompt_source;
        if (source == PromptSource::auto_template || source == PromptSource::auto_both) {
            if (!inputs.generator) throw Error(ErrorCode::CapabilityError, "no generator loaded");
            const auto candidates = generate_template_candidates(split.train, manual.verbalizer, task,
                                                                 *inputs.generator, config.beam_width,
                                                                 config.max_template_len);
            std::filesystem::create_directories(seed_dir);
            write_template_candidates(seed_dir / "templates.tsv", candidates);
            const auto mode = source == PromptSource::auto_both ? SelectionMode::best_one : config.template_selection;
            const auto selection = select_templates(candidates, manual.verbalizer, mode, config.template_top_k,
                                                    make_fine_tune_scorer(backend, task, split, search_train,
                                                                          settings.metric));
            write_template_candidates(seed_dir / "templates_selected.tsv", selection.selected);
            prompts.clear();
            for (const auto& cand : selection.selected) prompts.push_back(Prompt{cand.pattern, manual.verbalizer});
        }
        if (source == PromptSource::auto_label || source == PromptSource::auto_both) {
            auto search = config.label_search;
            if (search.rerank && search.rerank->anchors.empty()) search.rerank->anchors = manual.verbalizer.words();
            const auto pattern = prompts.front().pattern;
            const auto found = search_label_words(split, pattern, task, backend, search, settings.metric, &encoder);
            std::filesystem::create_directories(seed_dir);
            write_candidate_file(seed_dir / "label_words.tsv", found.candidates, task);
            prompts = {Prompt{pattern, found.best.verbalizer()}};
        }

        std::optional<DemoSource> demos;
        if (config.demonstrations) demos = make_demo_source(config.demo, split.train, &encoder);

        ResultRecord record;
        SeedRecords trials;
        record.method = config.method();
        if (prompts.size() > 1) {
            const auto ensemble = run_ensemble(prompts, split, inputs.test.examples, task, backend, settings, demos);
            record.test_metric = ensemble.test_metric;
            record.prompt = std::to_string(ensemble.members) + " templates";
        } else {
            const PromptLearner initial(backend.clone(), PromptModel(task, prompts.front(), backend, demos));
            const auto fit = fit_and_test(initial, split, inputs.test.examples, settings);
            trials = trial_records(fit, record.method);
            record.hyper = fit.best().hyper;
            record.best_step = fit.best().best_step;
            record.dev_metric = fit.best().dev_metric;
            record.test_metric = fit.test_metric;
            record.prompt = describe(prompts.front());
        }
        trials.push_back(std::move(record));
        return trials;
    });
}

RunOutcome run_baseline_protocol(const RunConfig& config, const BaselineSpec& spec) {
    config.validate();
    return run_baseline_protocol(config, spec, load_run_inputs(config));
}

RunOutcome run_baseline_protocol(const RunConfig& config, const BaselineSpec& spec, const RunInputs& inputs) {
    config.validate();
    const auto& task = inputs.train.task;
    const auto settings = config.fit_settings();
    const bool uses_prompt = spec.kind == BaselineKind::zero_shot || spec.kind == BaselineKind::in_context;
    const std::optional<Prompt> prompt = uses_prompt ? std::optional(manual_prompt(config, inputs)) : std::nullopt;
    const Prompt placeholder{parse_template("<S1> [MASK]"), Verbalizer{}};

    return run_seeds(config, inputs, [&](const FewShotSplit& split) {
        const auto outcome = run_baseline(spec, split, inputs.test.examples, prompt.value_or(placeholder), task,
                                          *inputs.backend, settings);
        ResultRecord record;
        SeedRecords records;
        record.method = config.method_label.empty() ? std::string(baseline_name(spec.kind)) : config.method_label;
        record.test_metric = outcome.test_metric;
        if (outcome.fit) {
            records = trial_records(*outcome.fit, record.method);
            record.hyper = outcome.fit->best().hyper;
            record.best_step = outcome.fit->best().best_step;
            record.dev_metric = outcome.fit->best().dev_metric;
        }
        if (prompt) record.prompt = describe(*prompt);
        records.push_back(std::move(record));
        return records;
    });
}

} // namespace clozefit
