// Command-line front end: full runs, searches, baselines and reports.

#include "clozefit/error.hpp"
#include "clozefit/runner.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace clozefit;

namespace {

// `[section] key = value` becomes the flag `--section-key`.
class SectionedIni : public CLI::ConfigINI {
public:
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        std::vector<CLI::ConfigItem> out;
        for (auto& item : CLI::ConfigINI::from_config(input)) {
            if (item.name == "++" || item.name == "--") continue;
            std::string name;
            for (const auto& parent : item.parents) name += parent + "-";
            item.name = name + item.name;
            item.parents.clear();
            out.push_back(std::move(item));
        }
        return out;
    }
};

// List options arrive split by CLI11 from the command line and from INI
// arrays; either way every element may still hold commas.
std::vector<std::string> split_list(const std::vector<std::string>& values) {
    std::vector<std::string> out;
    for (const auto& value : values) {
        std::stringstream in(value);
        std::string piece;
        while (std::getline(in, piece, ',')) {
            const auto b = piece.find_first_not_of(' ');
            const auto e = piece.find_last_not_of(' ');
            if (b != std::string::npos) out.push_back(piece.substr(b, e - b + 1));
        }
    }
    return out;
}

struct CliState {
    RunConfig config;
    std::vector<std::string> interval;
    std::vector<std::string> labels;
    std::string metric;
    std::vector<std::string> seeds;
    std::vector<std::string> learning_rates;
    std::vector<std::string> batch_sizes;
    std::string sampling = "selective";
    std::string segments = "one_seg";
    std::string selection = "best_one";
    std::vector<std::string> anchors;
    std::size_t rerank_m = 0;
    std::string source = "manual";
    std::string log_level = "warn";

    std::string baseline = "majority";
    std::size_t num_random_demos = 32;
    std::uint64_t search_seed = 13;
    std::string results;
    std::string markdown_out;
    std::string csv_out;

    void finish() {
        auto& c = config;
        if (!interval.empty()) {
            const auto parts = split_list(interval);
            if (parts.size() != 2) throw Error(ErrorCode::InvalidArgument, "interval must be 'lower,upper'");
            c.interval = std::pair{std::stod(parts[0]), std::stod(parts[1])};
        }
        if (!labels.empty()) c.labels = split_list(labels);
        if (!metric.empty()) c.metric = parse_metric(metric);
        c.apply_preset();
        if (!seeds.empty()) {
            c.protocol.seeds.clear();
            for (const auto& s : split_list(seeds)) c.protocol.seeds.push_back(std::stoull(s));
        }
        if (!learning_rates.empty()) {
            c.grid.learning_rates.clear();
            for (const auto& s : split_list(learning_rates)) c.grid.learning_rates.push_back(std::stod(s));
        }
        if (!batch_sizes.empty()) {
            c.grid.batch_sizes.clear();
            for (const auto& s : split_list(batch_sizes)) c.grid.batch_sizes.push_back(std::stoul(s));
        }
        if (sampling == "uniform") c.demo.sampling_mode = SamplingMode::uniform;
        else if (sampling == "selective") c.demo.sampling_mode = SamplingMode::selective;
        else throw Error(ErrorCode::InvalidArgument, "sampling must be uniform or selective");
        if (segments == "one_seg") c.demo.segment_strategy = SegmentStrategy::one_seg;
        else if (segments == "two_seg") c.demo.segment_strategy = SegmentStrategy::two_seg;
        else if (segments == "n_seg") c.demo.segment_strategy = SegmentStrategy::n_seg;
        else throw Error(ErrorCode::InvalidArgument, "segments must be one_seg, two_seg or n_seg");
        if (selection == "best_one") c.template_selection = SelectionMode::best_one;
        else if (selection == "top_k_ensemble") c.template_selection = SelectionMode::top_k_ensemble;
        else throw Error(ErrorCode::InvalidArgument, "selection must be best_one or top_k_ensemble");
        if (rerank_m > 0 || !anchors.empty()) {
            NeighborRerankSpec spec;
            if (rerank_m > 0) spec.m = rerank_m;
            spec.anchors = split_list(anchors);
            c.label_search.rerank = spec;
        }
        c.prompt_source = parse_prompt_source(source);
    }
};

void add_common_options(CLI::App& app, CliState& st) {
    auto& c = st.config;
    app.add_option("--data-task", c.task_name, "Task name; known names set metric, labels and interval");
    app.add_option("--data-train", c.train_path, "Training TSV (sentence1[, sentence2], label[, id])");
    app.add_option("--data-test", c.test_path, "Test TSV");
    app.add_option("--data-prompts", c.prompt_path, "Prompt file: template<TAB>label:word,...");
    app.add_option("--data-prompt-index", c.prompt_index, "Line of the prompt file to use");
    app.add_option("--data-generator", c.generator_path, "Generator table (JSON) for template search");
    app.add_option("--data-interval", st.interval, "Regression interval 'lower,upper'")->delimiter(',');
    app.add_option("--data-labels", st.labels, "Label names in class-id order")->delimiter(',');
    app.add_option("--data-metric", st.metric, "accuracy, f1, matthews or pearson");

    app.add_option("--protocol-k", c.protocol.k, "Examples per class in D_train");
    app.add_option("--protocol-seeds", st.seeds, "Comma-separated split seeds")->delimiter(',');
    app.add_option("--protocol-dev-multiplier", c.protocol.dev_multiplier, "D_dev size as a multiple of K (0: no D_dev)");
    app.add_option("--protocol-workers", c.protocol.workers, "Seeds run in parallel")->envname("CLOZEFIT_WORKERS");

    app.add_option("--train-max-steps", c.max_steps);
    app.add_option("--train-eval-every", c.eval_every);
    app.add_option("--train-learning-rates", st.learning_rates, "Grid learning rates")->delimiter(',');
    app.add_option("--train-batch-sizes", st.batch_sizes, "Grid batch sizes")->delimiter(',');

    app.add_flag("--demo-enabled", c.demonstrations, "Add demonstrations to the context");
    app.add_option("--demo-r", c.demo.r, "Fraction of each class kept by similarity");
    app.add_option("--demo-num-sets", c.demo.num_sets, "Demonstration sets averaged at inference");
    app.add_option("--demo-sampling", st.sampling, "uniform or selective");
    app.add_option("--demo-segments", st.segments, "one_seg, two_seg or n_seg");

    app.add_option("--search-k", c.label_search.k, "Words kept per class when pruning");
    app.add_option("--search-n", c.label_search.n, "Assignments re-ranked on D_dev");
    app.add_option("--search-max-steps", c.label_search.max_steps, "Fine-tuning steps per candidate");
    app.add_option("--search-eval-every", c.label_search.eval_every);
    app.add_option("--search-rerank-m", st.rerank_m, "Narrow each class to m neighbours of its manual word");
    app.add_option("--search-anchors", st.anchors, "Anchor words for neighbour re-ranking")->delimiter(',');
    app.add_option("--search-beam-width", c.beam_width);
    app.add_option("--search-max-template-len", c.max_template_len);
    app.add_option("--search-selection", st.selection, "best_one or top_k_ensemble");
    app.add_option("--search-top-k", c.template_top_k, "Templates kept for an ensemble");

    app.add_option("--toy-seed", c.toy.seed);
    app.add_option("--toy-lr-scale", c.toy.learning_rate_scale, "Multiplier applied to every learning rate");
    app.add_option("--toy-init-scale", c.toy.init_scale);
    app.add_option("--toy-max-input-length", c.toy.max_input_length);
    app.add_option("--toy-segments", c.toy.num_segments);

    app.add_option("--output-dir", c.output_dir)->envname("CLOZEFIT_OUTPUT_DIR");
    app.add_option("--output-wall-time", c.record_wall_time, "Record wall time (false keeps logs byte-stable)");
    app.add_option("--output-method", c.method_label, "Row name in reports");
    app.add_option("--log-level", st.log_level, "trace, debug, info, warn, error");
}

void print_protocol(const RunOutcome& outcome, std::string_view method) {
    for (const auto& r : outcome.records) std::cout << "seed " << r.seed << ": " << r.test_metric << '\n';
    std::cout << method << ": " << format_cell(100 * outcome.protocol.summary.mean, 100 * outcome.protocol.summary.stddev)
              << " over " << outcome.protocol.completed << " seed(s); log " << outcome.results_path.string() << '\n';
    if (outcome.protocol.completed == 0) {
        const auto& first = outcome.protocol.per_seed.front();
        throw Error(ErrorCode::NoSuccessfulTrial,
                    "no seed completed; seed " + std::to_string(first.seed) + ": " + first.error);
    }
}

int search_labels(const CliState& st) {
    const auto& config = st.config;
    config.validate();
    const auto inputs = load_run_inputs(config);
    const auto split = sample_split(inputs.train, config.protocol.k, st.search_seed, config.protocol.dev_multiplier);
    const auto& spec = inputs.prompts.at(config.prompt_index);
    auto search = config.label_search;
    if (search.rerank && search.rerank->anchors.empty()) {
        search.rerank->anchors = bind_verbalizer(spec.label_words, inputs.train.task.labels).words();
    }
    const HashBagEncoder encoder;
    const auto result = search_label_words(split, spec.pattern, inputs.train.task, *inputs.backend, search,
                                           config.resolved_metric(), &encoder);
    std::filesystem::create_directories(config.output_dir);
    const auto path = config.output_dir / "label_words.tsv";
    write_candidate_file(path, result.candidates, inputs.train.task);
    std::cout << "best:";
    for (const auto& w : result.best.words) std::cout << ' ' << w;
    std::cout << "\ncandidates: " << path.string() << '\n';
    return 0;
}

int search_templates(const CliState& st) {
    auto config = st.config;
    if (config.generator_path.empty()) throw Error(ErrorCode::InvalidArgument, "--data-generator is required");
    config.validate();
    const auto inputs = load_run_inputs(config);
    const auto split = sample_split(inputs.train, config.protocol.k, st.search_seed, config.protocol.dev_multiplier);
    const auto& spec = inputs.prompts.at(config.prompt_index);
    const auto verbalizer = bind_verbalizer(spec.label_words, inputs.train.task.labels);
    const auto candidates = generate_template_candidates(split.train, verbalizer, inputs.train.task,
                                                         *inputs.generator, config.beam_width,
                                                         config.max_template_len);
    std::filesystem::create_directories(config.output_dir);
    const auto path = config.output_dir / "templates.tsv";
    write_template_candidates(path, candidates);
    for (std::size_t i = 0; i < std::min<std::size_t>(candidates.size(), 10); ++i) {
        std::cout << i + 1 << '\t' << candidates[i].generation_score << '\t' << candidates[i].pattern.serialize()
                  << '\n';
    }
    std::cout << candidates.size() << " candidate(s): " << path.string() << '\n';
    return 0;
}

int report(const CliState& st) {
    const auto path = st.results.empty() ? st.config.output_dir / "results.jsonl" : std::filesystem::path(st.results);
    const auto records = read_results(path);
    const auto table = emit_report(records);
    std::cout << table.markdown;
    if (!st.markdown_out.empty()) std::ofstream(st.markdown_out) << table.markdown;
    if (!st.csv_out.empty()) std::ofstream(st.csv_out) << table.csv;
    return 0;
}

void print_error(std::string_view code, std::string_view message) {
    nlohmann::ordered_json record;
    record["error"] = code;
    record["message"] = message;
    std::cerr << record.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot prompt-based fine-tuning of masked language models"};
    app.config_formatter(std::make_shared<SectionedIni>());
    app.set_config("--config", "", "INI file; [section] key maps to --section-key");
    app.fallthrough();
    app.require_subcommand(1);

    CliState st;
    add_common_options(app, st);

    auto* run = app.add_subcommand("run", "Full multi-seed protocol for one prompt method");
    run->add_option("--source", st.source, "manual, auto_template, auto_label or auto_both");

    auto* labels = app.add_subcommand("search-labels", "Automatic label word search on one split");
    labels->add_option("--seed", st.search_seed, "Split seed");

    auto* templates = app.add_subcommand("search-templates", "Template generation on one split");
    templates->add_option("--seed", st.search_seed, "Split seed");

    auto* baseline = app.add_subcommand("baseline", "Multi-seed protocol for a baseline");
    baseline->add_option("--kind", st.baseline, "majority, zero_shot, in_context or head_finetune");
    baseline->add_option("--num-demos", st.num_random_demos, "Random demonstrations for in_context");

    auto* rep = app.add_subcommand("report", "Tables from a results log");
    rep->add_option("--results", st.results, "Results JSONL (default: <output-dir>/results.jsonl)");
    rep->add_option("--markdown", st.markdown_out, "Write the markdown table here");
    rep->add_option("--csv", st.csv_out, "Write the CSV table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() != 0) print_error("UsageError", e.what());
        return app.exit(e);
    }

    try {
        spdlog::set_level(spdlog::level::from_str(st.log_level));
        if (*rep) return report(st);
        st.finish();
        if (*run) {
            const auto outcome = run_experiment(st.config);
            print_protocol(outcome, st.config.method());
        } else if (*labels) {
            return search_labels(st);
        } else if (*templates) {
            return search_templates(st);
        } else if (*baseline) {
            BaselineSpec spec;
            spec.kind = parse_baseline_kind(st.baseline);
            spec.num_random_demos = st.num_random_demos;
            spec.head_learning_rate_scale = st.config.toy.learning_rate_scale;
            const auto outcome = run_baseline_protocol(st.config, spec);
            print_protocol(outcome, outcome.records.empty() ? st.baseline : outcome.records.front().method);
        }
    } catch (const Error& e) {
        print_error(to_string(e.code()), e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error("InternalError", e.what());
        return 2;
    }
    return 0;
}
