#include "clozefit/eval_protocol.hpp"
#include "clozefit/toy_backend.hpp"
#include "test_support.hpp"

#include <atomic>
#include <cmath>
#include <set>

using namespace clozefit;
using testing::code_of;

namespace {

Dataset sentiment_dataset(std::size_t per_class) {
    Dataset d;
    d.task = testing::classification_task({"negative", "positive"});
    d.examples = testing::sentiment_examples(per_class, 11);
    return d;
}

Dataset regression_dataset(std::size_t n) {
    Dataset d;
    d.task = testing::regression_task(0.0, 5.0, 0.0);
    Rng rng(3);
    for (std::size_t i = 0; i < n; ++i) {
        LabeledExample ex;
        ex.id = "r" + std::to_string(i);
        ex.sentence1 = "pair " + std::to_string(i);
        ex.label = std::round(rng.uniform(0.0, 5.0) * 10) / 10;
        d.examples.push_back(ex);
    }
    d.task.median = label_median(d.examples);
    return d;
}

// Learner whose dev accuracy follows a scripted curve; counts its own steps.
class ScriptedLearner final : public Learner {
public:
    ScriptedLearner(TaskSpec task, std::vector<double> curve) : task_(std::move(task)), curve_(std::move(curve)) {}

    double train_step(std::span<const LabeledExample> batch, double, Rng&) override {
        if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty");
        ++steps_;
        return 0.0;
    }
    std::vector<double> predict(std::span<const LabeledExample> examples, std::uint64_t) const override {
        // Correct on the first `hits` examples, where hits follows the curve.
        const double acc = curve_[std::min(curve_.size() - 1, steps_ / 100)];
        const auto hits = static_cast<std::size_t>(std::round(acc * static_cast<double>(examples.size())));
        std::vector<double> out;
        for (std::size_t i = 0; i < examples.size(); ++i) {
            const int gold = examples[i].class_id();
            out.push_back(i < hits ? gold : 1 - gold);
        }
        return out;
    }
    std::unique_ptr<Learner> clone() const override { return std::make_unique<ScriptedLearner>(*this); }
    std::size_t parameter_count() const override { return 0; }
    const TaskSpec& task() const override { return task_; }
    std::size_t steps_taken() const override { return steps_; }

private:
    TaskSpec task_;
    std::vector<double> curve_;
    std::size_t steps_ = 0;
};

} // namespace

TEST_CASE("sample_split") {
    const auto data = sentiment_dataset(40);

    const auto split = sample_split(data, 16, 13);
    CHECK(split.train.size() == 32);
    CHECK(split.dev.size() == 32);
    validate_split(split, data.task);
    std::set<std::string> train_ids;
    for (const auto& ex : split.train) train_ids.insert(ex.id);
    for (const auto& ex : split.dev) CHECK(train_ids.count(ex.id) == 0);

    const auto again = sample_split(data, 16, 13);
    for (std::size_t i = 0; i < split.train.size(); ++i) CHECK(split.train[i].id == again.train[i].id);
    for (std::size_t i = 0; i < split.dev.size(); ++i) CHECK(split.dev[i].id == again.dev[i].id);

    const auto other = sample_split(data, 16, 21);
    bool differs = false;
    for (std::size_t i = 0; i < split.train.size(); ++i) differs = differs || split.train[i].id != other.train[i].id;
    CHECK(differs);

    const auto doubled = sample_split(data, 8, 13, 2);
    CHECK(doubled.dev.size() == 2 * doubled.train.size());
    validate_split(doubled, data.task);
    CHECK(sample_split(data, 8, 13, 0).dev.empty());

    CHECK(code_of([&] { sample_split(data, 21, 13); }) == ErrorCode::InsufficientData);
    CHECK(code_of([&] { sample_split(data, 0, 13); }) == ErrorCode::InvalidArgument);

    auto broken = split;
    broken.dev.push_back(broken.train.front());
    CHECK(code_of([&] { validate_split(broken, data.task); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("regression splits are balanced around the median") {
    const auto data = regression_dataset(200);
    const auto split = sample_split(data, 16, 42);
    std::size_t above = 0;
    for (const auto& ex : split.train) above += ex.value() > data.task.median;
    CHECK(split.train.size() == 32);
    CHECK(above == 16);
    validate_split(split, data.task);

    // Values equal to the median fall in the lower bin.
    LabeledExample at;
    at.label = data.task.median;
    CHECK(data.task.class_of(at) == 0);
}

TEST_CASE("metrics") {
    const std::vector<double> gold{1, 0, 1, 0};
    CHECK(compute_metric(gold, gold, Metric::accuracy) == 1.0);
    CHECK(compute_metric(gold, gold, Metric::matthews) == doctest::Approx(1.0));
    CHECK(compute_metric(gold, gold, Metric::pearson) == doctest::Approx(1.0));

    const std::vector<double> ones{1, 1, 1, 1};
    CHECK(compute_metric(ones, gold, Metric::accuracy) == 0.5);
    CHECK(compute_metric(ones, gold, Metric::matthews) == 0.0);

    const std::vector<double> preds{1, 1, 0, 0};
    CHECK(compute_metric(preds, gold, Metric::f1) == doctest::Approx(0.5));

    const std::vector<double> flat{2, 2, 2, 2};
    CHECK(compute_metric(flat, gold, Metric::pearson) == 0.0);
    CHECK(code_of([&] { compute_metric(preds, std::vector<double>{1}, Metric::accuracy); }) == ErrorCode::ShapeError);

    CHECK(parse_metric("matthews") == Metric::matthews);
    CHECK(metric_abbreviation(Metric::accuracy) == "acc");
    CHECK(metric_abbreviation(Metric::f1) == "F1");
    CHECK(metric_abbreviation(Metric::matthews) == "Matt.");
    CHECK(metric_abbreviation(Metric::pearson) == "Pear.");
}

TEST_CASE("summaries use the population standard deviation") {
    const std::vector<double> two{0.8, 0.9};
    const auto s = summarize(two);
    CHECK(s.mean == doctest::Approx(0.85));
    CHECK(s.stddev == doctest::Approx(0.05));
    const std::vector<double> same{0.7, 0.7, 0.7};
    CHECK(summarize(same).stddev == 0.0);
}

TEST_CASE("grid shape and early stopping") {
    const auto data = sentiment_dataset(40);
    const auto split = sample_split(data, 16, 13);
    const ScriptedLearner learner(data.task, {0.5, 0.6, 0.9, 0.7, 0.9, 0.8, 0.6, 0.6, 0.6, 0.6, 0.6});

    TrainConfig base;
    base.seed = 13;
    const auto grid = grid_search(learner, split, Grid{}, base, Metric::accuracy);
    REQUIRE(grid.trials.size() == 9);
    CHECK(Grid{}.points().front().learning_rate == 1e-5);
    CHECK(Grid{}.points().front().batch_size == 2);
    for (const auto& trial : grid.trials) {
        REQUIRE(trial.history.size() == 10);
        for (std::size_t i = 0; i < 10; ++i) CHECK(trial.history[i].step == 100 * (i + 1));
        for (const auto& cp : trial.history) CHECK(*trial.dev_metric >= cp.dev_metric);
        // Earliest of the two 0.9 checkpoints.
        CHECK(trial.best_step == 200);
        CHECK(trial.best_step <= 1000);
    }
    CHECK(grid.best_index == 0); // all tied: first grid point
    CHECK(grid.best_model->steps_taken() == 200);

    Grid single;
    single.learning_rates = {2e-5};
    single.batch_sizes = {4};
    const auto one = grid_search(learner, split, single, base, Metric::accuracy);
    REQUIRE(one.trials.size() == 1);
    CHECK(one.best().hyper.learning_rate == 2e-5);
    CHECK(one.best().hyper.batch_size == 4);

    Grid empty;
    empty.batch_sizes.clear();
    CHECK(code_of([&] { grid_search(learner, split, empty, base, Metric::accuracy); }) == ErrorCode::InvalidArgument);

    Grid zero;
    zero.batch_sizes = {0};
    CHECK(code_of([&] { grid_search(learner, split, zero, base, Metric::accuracy); }) == ErrorCode::NoSuccessfulTrial);
}

TEST_CASE("no-dev training uses the fixed configuration") {
    const auto config = no_dev_config(7);
    CHECK(config.hyper.batch_size == 16);
    CHECK(config.hyper.learning_rate == 1e-5);
    CHECK(config.max_steps == 250);

    const auto data = sentiment_dataset(40);
    const auto split = sample_split(data, 16, 13, 0);
    const ScriptedLearner learner(data.task, {0.5});
    const auto trial = train_trial(learner, split, config, Metric::accuracy);
    CHECK_FALSE(trial.result.dev_metric);
    CHECK(trial.result.history.empty());
    CHECK(trial.best->steps_taken() == 250);
}

TEST_CASE("grid search on the toy backend dominates each of its points") {
    const auto data = sentiment_dataset(40);
    const auto split = sample_split(data, 8, 21);
    ToyMaskedLm lm(testing::sentiment_vocab(), ToyMlmOptions{.seed = 4});
    const Prompt prompt{parse_template("<S1> It was [MASK] ."), Verbalizer({"terrible", "great"})};
    const PromptLearner learner(lm.clone(), PromptModel(data.task, prompt, lm));

    Grid grid;
    grid.learning_rates = {1e-7, 1e-5};
    grid.batch_sizes = {2, 8};
    TrainConfig base;
    base.max_steps = 200;
    base.seed = 21;
    const auto result = grid_search(learner, split, grid, base, Metric::accuracy);
    for (const auto& point : grid.points()) {
        TrainConfig config = base;
        config.hyper = point;
        const auto alone = train_trial(learner, split, config, Metric::accuracy);
        CHECK(*result.best().dev_metric >= *alone.result.dev_metric);
    }
    CHECK(*result.best().dev_metric >= 0.9);
}

TEST_CASE("run_protocol") {
    const auto data = sentiment_dataset(40);
    ProtocolConfig config;
    CHECK(config.seeds == std::vector<std::uint64_t>{13, 21, 42, 87, 100});

    const auto constant = run_protocol(data, config, [](const FewShotSplit&) { return 0.75; });
    CHECK(constant.completed == 5);
    CHECK(constant.summary.mean == doctest::Approx(0.75));
    CHECK(constant.summary.stddev == 0.0);

    const auto partial = run_protocol(data, config, [](const FewShotSplit& s) -> double {
        if (s.seed == 42) throw Error(ErrorCode::TrainingDiverged, "boom");
        return s.seed == 13 ? 0.8 : 0.9;
    });
    CHECK(partial.completed == 4);
    CHECK_FALSE(partial.per_seed[2].ok);
    CHECK(partial.per_seed[2].error == "boom");
    CHECK(partial.summary.mean == doctest::Approx((0.8 + 0.9 * 3) / 4));

    config.workers = 3;
    std::atomic<int> calls{0};
    const auto parallel = run_protocol(data, config, [&](const FewShotSplit& s) {
        ++calls;
        return static_cast<double>(s.seed);
    });
    CHECK(calls == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(parallel.per_seed[i].test_metric == static_cast<double>(config.seeds[i]));
}
