// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include "clozefit/error.hpp"
#include "clozefit/runner.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

using namespace clozefit;
namespace fs = std::filesystem;

namespace {

const std::string kData = CLOZEFIT_DATA;
const std::string kFixtures = CLOZEFIT_FIXTURES;

// Collects failed expectations for one criterion.
struct Check {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok && failures.size() < 5) failures.push_back(what);
        if (!ok && failures.size() == 5) failures.push_back("...");
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

int failed = 0;

void criterion(int n, const std::string& title, const std::function<std::string(Check&)>& body) {
    Check check;
    std::string detail;
    const auto start = Clock::now();
    try {
        detail = body(check);
    } catch (const std::exception& e) {
        check.failures.push_back(std::string("exception: ") + e.what());
    }
    const double took = seconds_since(start);
    const bool ok = check.failures.empty();
    failed += ok ? 0 : 1;
    std::printf("%s criterion %d: %s [%.2fs]%s%s\n", ok ? "PASS" : "FAIL", n, title.c_str(), took,
                detail.empty() ? "" : " ", detail.c_str());
    for (const auto& f : check.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
}

LabeledExample make_example(std::string id, std::string s1, int label) {
    LabeledExample ex;
    ex.id = std::move(id);
    ex.sentence1 = std::move(s1);
    ex.label = ClassId{label};
    return ex;
}

TaskSpec classes(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < n; ++c) names.push_back("c" + std::to_string(c));
    TaskSpec task;
    task.name = "random";
    task.labels = LabelSet(names);
    return task;
}

std::string random_sentence(const std::vector<std::string>& words, Rng& rng, std::size_t min_len, std::size_t max_len) {
    const std::size_t len = min_len + rng.uniform_index(max_len - min_len + 1);
    std::string out;
    for (std::size_t i = 0; i < len; ++i) out += (i ? " " : "") + words[rng.uniform_index(words.size())];
    return out;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string sci(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1e", x);
    return buf;
}

std::string fmt(double x, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
    return buf;
}

// ---------------------------------------------------------------------------

std::string restricted_softmax(Check& check) {
    Rng rng(1);
    const auto start = Clock::now();
    double worst = 0.0;
    for (int draw = 0; draw < 1000; ++draw) {
        const std::size_t vocab = 20 + rng.uniform_index(200);
        MaskLogits logits;
        logits.values.resize(vocab);
        for (auto& x : logits.values) x = rng.normal(0.0, 1.0) * (draw % 10 == 0 ? 200.0 : 5.0);
        const std::size_t n = 2 + rng.uniform_index(5);
        std::vector<int> tokens;
        while (tokens.size() < n) {
            const int t = static_cast<int>(rng.uniform_index(vocab));
            if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) tokens.push_back(t);
        }
        const auto dist = class_probabilities(logits, tokens);
        double sum = 0.0;
        bool finite = dist.probs.size() == n;
        for (const double p : dist.probs) {
            sum += p;
            finite = finite && std::isfinite(p) && p >= 0.0;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
        check.expect(finite, "draw " + std::to_string(draw) + ": bad probabilities");
    }
    const double took = seconds_since(start);
    check.expect(worst <= 1e-6, "sum deviates by " + std::to_string(worst));
    check.expect(took < 1.0, "took " + fmt(took) + "s");
    return "max |sum-1| = " + sci(worst);
}

std::string label_search_matches_oracle(Check& check) {
    Rng rng(2);
    const auto start = Clock::now();
    const Template pattern = parse_template("<S1> It was [MASK] .");
    std::size_t compared = 0;
    for (int instance = 0; instance < 50; ++instance) {
        const std::size_t vocab = 6 + rng.uniform_index(45); // up to 50 words
        std::vector<std::string> words;
        for (std::size_t i = 0; i < vocab; ++i) words.push_back("w" + std::to_string(i));
        ToyMaskedLm lm(words, ToyMlmOptions{.seed = rng.next(), .init_scale = 1.0});
        const std::size_t n_classes = 2 + rng.uniform_index(2);
        const auto task = classes(n_classes);
        std::vector<LabeledExample> train;
        for (std::size_t c = 0; c < n_classes; ++c) {
            for (int i = 0; i < 3; ++i) {
                train.push_back(make_example("e" + std::to_string(train.size()), random_sentence(words, rng, 2, 6),
                                             static_cast<int>(c)));
            }
        }
        const std::size_t k = 2 + rng.uniform_index(4);
        const std::size_t n = 1 + rng.uniform_index(20);

        std::vector<std::vector<int>> pruned;
        for (std::size_t c = 0; c < n_classes; ++c) {
            std::vector<LabeledExample> members;
            for (const auto& ex : train) {
                if (ex.class_id() == static_cast<int>(c)) members.push_back(ex);
            }
            pruned.push_back(prune_vocab(members, pattern, lm, k));
            const auto expected = oracle::prune(members, pattern, lm, k);
            check.expect(pruned.back() == expected, "instance " + std::to_string(instance) + ": pruned set differs");
        }

        const auto expected = oracle::rank_assignments(pruned, train, pattern, task, lm, n);
        if (expected.empty()) {
            bool threw = false;
            try {
                enumerate_assignments(pruned, train, pattern, task, lm, n);
            } catch (const Error& e) {
                threw = e.code() == ErrorCode::NoValidAssignment;
            }
            check.expect(threw, "instance " + std::to_string(instance) + ": expected NoValidAssignment");
            continue;
        }
        const auto got = enumerate_assignments(pruned, train, pattern, task, lm, n);
        check.expect(got.size() == expected.size(), "instance " + std::to_string(instance) + ": size differs");
        for (std::size_t i = 0; i < std::min(got.size(), expected.size()); ++i) {
            check.expect(got[i].tokens == expected[i].tokens && got[i].correct == expected[i].correct,
                         "instance " + std::to_string(instance) + ": rank " + std::to_string(i) + " differs");
        }
        ++compared;
    }
    const double took = seconds_since(start);
    check.expect(took < 30.0, "took " + fmt(took) + "s");
    return std::to_string(compared) + " of 50 instances enumerated";
}

ToyGenerator random_generator(const std::vector<std::string>& vocab, const std::vector<std::string>& keys, Rng& rng) {
    ToyGenerator gen(vocab);
    for (const auto& key : keys) {
        for (int prev = ToyGenerator::kStart; prev < static_cast<int>(vocab.size()); ++prev) {
            std::vector<double> w(vocab.size());
            for (auto& x : w) x = 0.05 + rng.uniform01();
            gen.set_row(key, prev, w);
        }
    }
    return gen;
}

std::string template_search_matches_oracle(Check& check) {
    Rng rng(3);
    const auto start = Clock::now();
    const std::vector<GenerationInput> inputs{{ConversionForm::after_single, "fun . <X> great <Y>"},
                                              {ConversionForm::after_single, "dull . <X> terrible <Y>"},
                                              {ConversionForm::after_single, "ok . <X> great <Y>"}};
    double worst = 0.0;
    for (int g = 0; g < 20; ++g) {
        std::vector<std::string> vocab{"<Y>", "<Z>"};
        const std::size_t extra = 2 + rng.uniform_index(6);
        for (std::size_t i = 0; i < extra; ++i) vocab.push_back("t" + std::to_string(i));
        const auto gen = random_generator(vocab, {"", "great", "terrible"}, rng);
        for (int s = 0; s < 10; ++s) {
            std::vector<int> seq;
            const std::size_t len = 1 + rng.uniform_index(6);
            for (std::size_t i = 0; i < len; ++i) seq.push_back(static_cast<int>(rng.uniform_index(vocab.size())));
            const double got = template_log_prob(seq, inputs, gen);
            const double want = oracle::sequence_log_prob(seq, inputs, gen);
            worst = std::max(worst, std::abs(got - want));
        }
    }
    check.expect(worst <= 1e-6, "log-prob differs by " + std::to_string(worst));

    for (int g = 0; g < 5; ++g) {
        const auto gen = random_generator({"<Y>", "<Z>", "it", "was"}, {"", "great", "terrible"}, rng);
        const auto beam = beam_search_templates(inputs, gen, 10000, 3);
        const auto all = oracle::all_decodes(inputs, gen, 0, 1, 3);
        check.expect(!beam.empty() && !all.empty(), "no decodes");
        if (beam.empty() || all.empty()) continue;
        check.expect(beam.front().tokens == all.front().tokens, "beam optimum differs from exhaustive optimum");
        check.expect(std::abs(beam.front().score - all.front().score) <= 1e-6, "optimum score differs");
    }
    const double took = seconds_since(start);
    check.expect(took < 30.0, "took " + fmt(took) + "s");
    return "max |diff| = " + sci(worst);
}

std::vector<double> numeric_logit_gradient(const MaskLoss& loss, std::vector<double> logits) {
    std::vector<double> out(logits.size()), scratch(logits.size());
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double x = logits[i];
        logits[i] = x + h;
        const double up = loss(logits, scratch);
        logits[i] = x - h;
        const double down = loss(logits, scratch);
        logits[i] = x;
        out[i] = (up - down) / (2 * h);
    }
    return out;
}

std::string gradients_and_regression(Check& check) {
    Rng rng(4);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> logits(10);
        for (auto& x : logits) x = rng.normal(0.0, 2.0);
        std::vector<double> grad(10, 0.0);
        const auto ce = classification_mask_loss({0, 3, 7}, static_cast<int>(rng.uniform_index(3)));
        ce(logits, grad);
        worst = std::max(worst, max_relative_error(grad, numeric_logit_gradient(ce, logits)));
        std::fill(grad.begin(), grad.end(), 0.0);
        const auto kl = regression_mask_loss(2, 5, rng.uniform01());
        kl(logits, grad);
        worst = std::max(worst, max_relative_error(grad, numeric_logit_gradient(kl, logits)));
    }

    // Through the toy model's parameters.
    ToyMaskedLm lm({"good", "bad", "movie", "plot", "great", "terrible"}, ToyMlmOptions{.seed = 5, .init_scale = 0.3});
    const int great = *lm.word_token("great"), terrible = *lm.word_token("terrible");
    const std::vector<TrainItem> batch{
        {"good movie . it was [MASK] .", {}, classification_mask_loss({terrible, great}, 1)},
        {"bad plot . it was [MASK] .", {}, classification_mask_loss({terrible, great}, 0)},
        {"good bad movie . it was [MASK] .", {}, regression_mask_loss(terrible, great, 0.4)},
    };
    const auto analytic = lm.batch_gradient(batch);
    auto params = lm.parameters();
    std::vector<double> numeric(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double x = params[i];
        params[i] = x + 1e-6;
        const double up = lm.batch_loss(batch);
        params[i] = x - 1e-6;
        const double down = lm.batch_loss(batch);
        params[i] = x;
        numeric[i] = (up - down) / 2e-6;
    }
    worst = std::max(worst, max_relative_error(analytic, numeric));
    check.expect(worst < 1e-4, "gradient relative error " + std::to_string(worst));

    double round_trip = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double lo = rng.uniform(-10, 10);
        const double hi = lo + rng.uniform(0.01, 20);
        const double y = rng.uniform(lo, hi);
        const RegressionSpec spec{lo, hi, 0, 1};
        round_trip = std::max(round_trip, std::abs(regression_predict(regression_target(y, spec), spec) - y));
    }
    check.expect(round_trip <= 1e-9, "round trip error " + std::to_string(round_trip));
    return "gradient rel err " + sci(worst) + ", round trip " + sci(round_trip);
}

std::string demonstration_sampling(Check& check) {
    Rng rng(5);
    const auto start = Clock::now();
    const std::vector<std::string> words{"bright", "dark", "film", "story", "cast", "slow", "quick", "warm", "cold",
                                         "loud", "quiet", "sharp", "dull", "long", "short"};
    const auto task = classes(3);
    std::vector<LabeledExample> train;
    for (int i = 0; i < 30; ++i) {
        train.push_back(make_example("t" + std::to_string(i), random_sentence(words, rng, 3, 8), i % 3));
    }
    const HashBagEncoder encoder;
    std::vector<SentenceEmbedding> embs;
    for (const auto& ex : train) embs.push_back(embed_example(encoder, ex));

    std::size_t sets = 0;
    for (int q = 0; q < 20; ++q) {
        const auto& query = train[rng.uniform_index(train.size())];
        const auto qe = embed_example(encoder, query);
        for (const double r : {1.0, 0.5}) {
            const auto pools = build_pools(query, &qe, train, embs, r, task);
            // Exhaustive pool: the top ceil(r * n) similarities of each class, ties included.
            std::vector<double> cutoff(3);
            for (int c = 0; c < 3; ++c) {
                std::vector<double> sims;
                for (std::size_t i = 0; i < train.size(); ++i) {
                    if (train[i].class_id() != c || train[i].id == query.id) continue;
                    double dot = 0.0;
                    for (std::size_t d = 0; d < qe.values.size(); ++d) dot += qe.values[d] * embs[i].values[d];
                    sims.push_back(dot);
                }
                std::sort(sims.rbegin(), sims.rend());
                const auto keep = static_cast<std::size_t>(std::ceil(r * static_cast<double>(sims.size()) - 1e-9));
                cutoff[static_cast<std::size_t>(c)] = sims[std::max<std::size_t>(keep, 1) - 1];
            }
            for (int s = 0; s < 250; ++s) {
                const auto set = sample_demo_set(pools, rng);
                ++sets;
                check.expect(set.members.size() == 3, "set size");
                for (std::size_t c = 0; c < set.members.size(); ++c) {
                    const auto* m = set.members[c];
                    check.expect(m->class_id() == static_cast<int>(c), "wrong class in slot");
                    check.expect(m->id != query.id, "query used as its own demonstration");
                    const auto idx = static_cast<std::size_t>(m - train.data());
                    double dot = 0.0;
                    for (std::size_t d = 0; d < qe.values.size(); ++d) dot += qe.values[d] * embs[idx].values[d];
                    check.expect(dot >= cutoff[c] - 1e-12, "demonstration outside the top-r pool");
                }
            }
        }
    }

    // Ensemble order invariance.
    ToyMaskedLm lm(words, ToyMlmOptions{.seed = 9, .init_scale = 0.5});
    const Prompt prompt{parse_template("<S1> It was [MASK] ."), Verbalizer({"bright", "dark", "cold"})};
    const auto tokens = resolve_label_tokens(prompt.verbalizer, lm);
    const auto& query = train[0];
    const auto pools = build_pools(query, nullptr, train, {}, 1.0, task);
    std::vector<DemonstrationSet> demo_sets;
    for (int i = 0; i < 8; ++i) demo_sets.push_back(sample_demo_set(pools, rng));
    const auto base = ensemble_from_sets(query, demo_sets, prompt, tokens, task, lm, EnsembleOptions{});
    for (int i = 0; i < 20; ++i) {
        rng.shuffle(demo_sets);
        const auto again = ensemble_from_sets(query, demo_sets, prompt, tokens, task, lm, EnsembleOptions{});
        check.expect(again.probs == base.probs, "ensemble depends on set order");
    }
    const double took = seconds_since(start);
    check.expect(sets == 10000, "sampled " + std::to_string(sets) + " sets");
    check.expect(took < 10.0, "took " + fmt(took) + "s");
    return std::to_string(sets) + " sets";
}

std::string golden_renders(Check& check) {
    std::ifstream in(kFixtures + "/render_golden.tsv");
    check.expect(static_cast<bool>(in), "fixture missing");
    std::string line;
    std::size_t cases = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, '\t');) f.push_back(cell);
        if (f.size() != 6) {
            check.expect(false, "bad fixture line: " + line);
            continue;
        }
        const auto spec = read_prompt_file(kData + "/prompts/" + f[0] + ".tsv").front();
        auto ex = make_example("g", f[1], 0);
        if (f[2] != "-") ex.sentence2 = f[2];
        std::string word;
        for (const auto& [label, w] : spec.label_words) {
            if (label == f[3]) word = w;
        }
        check.expect(render(spec.pattern, ex) == f[4], "query render: " + line);
        check.expect(render_filled(spec.pattern, ex, Verbalizer({word}), 0) == f[5], "filled render: " + line);
        cases += 2;
    }
    check.expect(cases >= 30, "only " + std::to_string(cases) + " cases");
    return std::to_string(cases) + " cases";
}

// ---------------------------------------------------------------------------
// Full runs on the bundled synthetic data

RunConfig synthetic_config(const fs::path& out) {
    RunConfig c;
    c.task_name = "SST-2";
    c.train_path = kData + "/synthetic/train.tsv";
    c.test_path = kData + "/synthetic/test.tsv";
    c.prompt_path = kData + "/prompts/sst-2.tsv";
    c.apply_preset();
    c.protocol.k = 16;
    c.demonstrations = true;
    c.demo.segment_strategy = SegmentStrategy::two_seg;
    c.output_dir = out;
    c.record_wall_time = false;
    return c;
}

struct SyntheticRuns {
    RunOutcome first, second;
    std::string first_log, second_log;
    double seconds = 0.0;
};

const SyntheticRuns& synthetic_runs() {
    static const SyntheticRuns runs = [] {
        SyntheticRuns r;
        const auto root = fs::temp_directory_path() / "clozefit_acceptance";
        fs::remove_all(root);
        auto a = synthetic_config(root / "a");
        auto b = synthetic_config(root / "b");
        b.protocol.workers = 5; // parallel seeds must not change the log
        const auto inputs = load_run_inputs(a);
        const auto start = Clock::now();
        r.first = run_experiment(a, inputs);
        r.seconds = seconds_since(start);
        r.second = run_experiment(b, inputs);
        r.first_log = slurp(r.first.results_path);
        r.second_log = slurp(r.second.results_path);
        fs::remove_all(root);
        return r;
    }();
    return runs;
}

std::string reproducible_runs(Check& check) {
    const auto& runs = synthetic_runs();
    check.expect(!runs.first_log.empty(), "empty results log");
    check.expect(runs.first_log == runs.second_log, "results logs differ");
    check.expect(runs.first.protocol.completed == 5, "not all seeds completed");

    const auto config = synthetic_config("unused");
    const auto train = load_dataset(config.train_path, DatasetSchema{config.task_name, {}, {}});
    for (const auto seed : default_seeds()) {
        const auto split = sample_split(train, 16, seed);
        std::map<int, std::size_t> train_counts, dev_counts;
        std::set<std::string> ids;
        for (const auto& ex : split.train) {
            ++train_counts[ex.class_id()];
            ids.insert(ex.id);
        }
        bool disjoint = true;
        for (const auto& ex : split.dev) {
            ++dev_counts[ex.class_id()];
            disjoint = disjoint && ids.count(ex.id) == 0;
        }
        check.expect(disjoint, "seed " + std::to_string(seed) + ": D_train and D_dev overlap");
        for (int c = 0; c < 2; ++c) {
            check.expect(train_counts[c] == 16 && dev_counts[c] == 16,
                         "seed " + std::to_string(seed) + ": class sizes differ from K");
        }
    }
    return std::to_string(runs.first_log.size()) + " identical bytes";
}

std::string synthetic_accuracy(Check& check) {
    const auto& runs = synthetic_runs();
    const auto config = synthetic_config(fs::temp_directory_path() / "clozefit_acceptance_baselines");
    const auto inputs = load_run_inputs(config);
    const auto majority = run_baseline_protocol(config, {BaselineKind::majority}, inputs);
    const auto zero_shot = run_baseline_protocol(config, {BaselineKind::zero_shot}, inputs);
    fs::remove_all(config.output_dir);

    const double ours = runs.first.protocol.summary.mean;
    const double maj = majority.protocol.summary.mean;
    const double zs = zero_shot.protocol.summary.mean;
    check.expect(ours >= 0.90, "accuracy " + fmt(ours) + " below 0.90");
    check.expect(ours > maj, "not above majority");
    check.expect(ours > zs, "not above zero-shot");
    check.expect(runs.seconds < 300.0, "run took " + fmt(runs.seconds, 1) + "s");
    return "acc " + fmt(ours) + " vs majority " + fmt(maj) + ", zero-shot " + fmt(zs) + "; " + fmt(runs.seconds, 1) +
           "s";
}

std::string grid_and_checkpoints(Check& check) {
    const auto config = synthetic_config("unused");
    const auto inputs = load_run_inputs(config);
    const auto& task = inputs.train.task;
    const auto split = sample_split(inputs.train, 16, 13);
    const auto& spec = inputs.prompts.front();
    const Prompt prompt{spec.pattern, bind_verbalizer(spec.label_words, task.labels)};
    const HashBagEncoder encoder;
    const auto demos = make_demo_source(config.demo, split.train, &encoder);
    const PromptLearner learner(inputs.backend->clone(), PromptModel(task, prompt, *inputs.backend, demos));

    TrainConfig base;
    base.seed = split.seed;
    const auto grid = grid_search(learner, split, Grid{}, base, Metric::accuracy);
    check.expect(grid.trials.size() == 9, std::to_string(grid.trials.size()) + " trials");
    std::set<std::pair<double, std::size_t>> points;
    for (const auto& trial : grid.trials) {
        points.insert({trial.hyper.learning_rate, trial.hyper.batch_size});
        check.expect(trial.history.size() == 10, "history has " + std::to_string(trial.history.size()) + " entries");
        for (std::size_t i = 0; i < trial.history.size(); ++i) {
            check.expect(trial.history[i].step == 100 * (i + 1), "unexpected checkpoint step");
        }
        check.expect(trial.dev_metric.has_value(), "trial without a dev score");
        if (!trial.dev_metric) continue;
        bool seen = false;
        for (const auto& cp : trial.history) {
            check.expect(*trial.dev_metric >= cp.dev_metric, "retained checkpoint is not the best");
            seen = seen || (cp.step == trial.best_step && cp.dev_metric == *trial.dev_metric);
        }
        check.expect(seen, "retained step missing from the history");
        check.expect(*grid.best().dev_metric >= *trial.dev_metric, "grid best is not the maximum");
    }
    check.expect(points.size() == 9, "grid points are not distinct");
    check.expect(grid.best_model->steps_taken() == grid.best().best_step, "kept model is not the retained checkpoint");
    return "best lr " + fmt(grid.best().hyper.learning_rate * 1e5, 0) + "e-5, bs " +
           std::to_string(grid.best().hyper.batch_size) + ", step " + std::to_string(grid.best().best_step) +
           ", dev " + fmt(*grid.best().dev_metric);
}

} // namespace

int main() {
    criterion(1, "restricted softmax is a distribution", restricted_softmax);
    criterion(2, "label search matches exhaustive scoring", label_search_matches_oracle);
    criterion(3, "template scoring and beam search match exhaustive decoding", template_search_matches_oracle);
    criterion(4, "loss gradients and regression round trip", gradients_and_regression);
    criterion(5, "demonstration sampling", demonstration_sampling);
    criterion(6, "golden template renders", golden_renders);
    criterion(7, "runs are reproducible and splits are exact", reproducible_runs);
    criterion(8, "prompt fine-tuning with demonstrations beats baselines", synthetic_accuracy);
    criterion(9, "grid search keeps the best checkpoint", grid_and_checkpoints);
    std::printf("%d criterion(s) failed\n", failed);
    return failed == 0 ? 0 : 1;
}
