#include "clozefit/eval_protocol.hpp"

#include "clozefit/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

namespace clozefit {

namespace {

constexpr std::uint64_t kEvalSeedSalt = 0x5eed5eedULL;

int as_class(double v) { return static_cast<int>(std::lround(v)); }

} // namespace

// ---------------------------------------------------------------------------
// Splits

FewShotSplit sample_split(const Dataset& dataset, std::size_t k, std::uint64_t seed, std::size_t dev_multiplier) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "K must be positive");
    const auto& task = dataset.task;
    std::vector<std::vector<std::size_t>> by_class(task.num_classes());
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        by_class[static_cast<std::size_t>(task.class_of(dataset.examples[i]))].push_back(i);
    }
    const std::size_t need = k * (1 + dev_multiplier);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < need) {
            throw Error(ErrorCode::InsufficientData, "class " + std::to_string(c) + " has " +
                                                         std::to_string(by_class[c].size()) + " examples, need " +
                                                         std::to_string(need));
        }
    }

    FewShotSplit split;
    split.seed = seed;
    split.k = k;
    split.dev_multiplier = dev_multiplier;
    Rng rng(seed);
    for (auto& indices : by_class) {
        rng.shuffle(indices);
        for (std::size_t j = 0; j < k; ++j) split.train.push_back(dataset.examples[indices[j]]);
        for (std::size_t j = k; j < need; ++j) split.dev.push_back(dataset.examples[indices[j]]);
    }
    return split;
}

void validate_split(const FewShotSplit& split, const TaskSpec& task) {
    std::vector<std::size_t> train_counts(task.num_classes(), 0), dev_counts(task.num_classes(), 0);
    std::set<std::string> ids;
    for (const auto& ex : split.train) {
        ++train_counts[static_cast<std::size_t>(task.class_of(ex))];
        if (!ids.insert(ex.id).second) throw Error(ErrorCode::InvalidArgument, "duplicate id in D_train: " + ex.id);
    }
    for (const auto& ex : split.dev) {
        ++dev_counts[static_cast<std::size_t>(task.class_of(ex))];
        if (!ids.insert(ex.id).second) throw Error(ErrorCode::InvalidArgument, "D_train and D_dev share id " + ex.id);
    }
    for (std::size_t c = 0; c < train_counts.size(); ++c) {
        if (train_counts[c] != split.k || dev_counts[c] != split.k * split.dev_multiplier) {
            throw Error(ErrorCode::InvalidArgument, "class " + std::to_string(c) + " has " +
                                                        std::to_string(train_counts[c]) + " train / " +
                                                        std::to_string(dev_counts[c]) + " dev examples");
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics

Metric parse_metric(std::string_view name) {
    if (name == "accuracy" || name == "acc") return Metric::accuracy;
    if (name == "f1" || name == "F1") return Metric::f1;
    if (name == "matthews" || name == "mcc") return Metric::matthews;
    if (name == "pearson") return Metric::pearson;
    throw Error(ErrorCode::InvalidArgument, "unknown metric '" + std::string(name) + "'");
}

std::string_view metric_name(Metric metric) {
    switch (metric) {
    case Metric::accuracy: return "accuracy";
    case Metric::f1: return "f1";
    case Metric::matthews: return "matthews";
    case Metric::pearson: return "pearson";
    }
    return "?";
}

std::string_view metric_abbreviation(Metric metric) {
    switch (metric) {
    case Metric::accuracy: return "acc";
    case Metric::f1: return "F1";
    case Metric::matthews: return "Matt.";
    case Metric::pearson: return "Pear.";
    }
    return "?";
}

double compute_metric(std::span<const double> predictions, std::span<const double> golds, Metric metric,
                      int positive_class) {
    if (predictions.size() != golds.size()) throw Error(ErrorCode::ShapeError, "predictions and golds differ in length");
    if (predictions.empty()) throw Error(ErrorCode::EmptyInput, "no predictions to score");
    const auto n = static_cast<double>(predictions.size());

    if (metric == Metric::pearson) {
        double mp = 0.0, mg = 0.0;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            mp += predictions[i];
            mg += golds[i];
        }
        mp /= n;
        mg /= n;
        double cov = 0.0, vp = 0.0, vg = 0.0;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            cov += (predictions[i] - mp) * (golds[i] - mg);
            vp += (predictions[i] - mp) * (predictions[i] - mp);
            vg += (golds[i] - mg) * (golds[i] - mg);
        }
        if (vp <= 0.0 || vg <= 0.0) {
            spdlog::warn("pearson: zero variance in {}, reporting 0", vp <= 0.0 ? "predictions" : "golds");
            return 0.0;
        }
        return std::clamp(cov / std::sqrt(vp * vg), -1.0, 1.0);
    }

    double tp = 0, fp = 0, fn = 0, tn = 0, correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = as_class(predictions[i]);
        const int g = as_class(golds[i]);
        if (p == g) ++correct;
        const bool pp = p == positive_class, gp = g == positive_class;
        if (pp && gp) ++tp;
        else if (pp && !gp) ++fp;
        else if (!pp && gp) ++fn;
        else ++tn;
    }
    switch (metric) {
    case Metric::accuracy:
        return correct / n;
    case Metric::f1:
        return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    case Metric::matthews: {
        const double denom = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
        return denom == 0.0 ? 0.0 : (tp * tn - fp * fn) / denom;
    }
    case Metric::pearson:
        break;
    }
    return 0.0;
}

std::vector<double> gold_values(std::span<const LabeledExample> examples, const TaskSpec& task) {
    std::vector<double> golds;
    golds.reserve(examples.size());
    for (const auto& ex : examples) {
        golds.push_back(task.is_regression() ? ex.value() : static_cast<double>(task.class_of(ex)));
    }
    return golds;
}

Summary summarize(std::span<const double> values) {
    if (values.empty()) return {};
    // Welford: constant inputs give an exact zero spread.
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (const double v : values) {
        ++n;
        const double delta = v - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (v - mean);
    }
    return {mean, std::sqrt(m2 / static_cast<double>(n))};
}

// ---------------------------------------------------------------------------
// Learners

TrainConfig no_dev_config(std::uint64_t seed) {
    TrainConfig config;
    config.hyper = {1e-5, 16};
    config.max_steps = 250;
    config.seed = seed;
    return config;
}

std::vector<HyperParams> Grid::points() const {
    std::vector<HyperParams> out;
    for (const double lr : learning_rates) {
        for (const std::size_t bs : batch_sizes) out.push_back({lr, bs});
    }
    return out;
}

PromptLearner::PromptLearner(std::unique_ptr<Backend> backend, PromptModel model)
    : backend_(std::move(backend)), model_(std::move(model)) {
    if (const auto& demos = model_.demos()) {
        backend_->ensure_segments(required_segments(demos->config.segment_strategy, model_.task().num_classes(),
                                                    model_.task().sentences_per_example()));
    }
}

double PromptLearner::train_step(std::span<const LabeledExample> batch, double learning_rate, Rng& rng) {
    std::vector<TrainItem> items;
    items.reserve(batch.size());
    for (const auto& ex : batch) items.push_back(model_.train_item(*backend_, ex, rng));
    const double loss = backend_->train_step(items, learning_rate);
    ++steps_;
    return loss;
}

std::vector<double> PromptLearner::predict(std::span<const LabeledExample> examples, std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<double> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(model_.predict_label(*backend_, ex, rng));
    return out;
}

std::vector<std::vector<double>> PromptLearner::class_log_probs(std::span<const LabeledExample> examples,
                                                                std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<std::vector<double>> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        auto dist = model_.predict(*backend_, ex, rng);
        for (double& p : dist.probs) p = std::log(std::max(p, kProbabilityFloor));
        out.push_back(std::move(dist.probs));
    }
    return out;
}

std::unique_ptr<Learner> PromptLearner::clone() const {
    auto copy = std::make_unique<PromptLearner>(backend_->clone(), model_);
    copy->steps_ = steps_;
    return copy;
}

HeadLearner::HeadLearner(std::unique_ptr<Backend> backend, TaskSpec task, std::uint64_t seed,
                         double learning_rate_scale)
    : backend_(std::move(backend)), task_(std::move(task)), learning_rate_scale_(learning_rate_scale) {
    Rng rng(seed);
    head_ = BaselineHead::random(task_.is_regression() ? 1 : task_.num_classes(), backend_->hidden_size(), rng);
}

std::vector<double> HeadLearner::representation(const LabeledExample& example) const {
    if (!example.sentence2) return backend_->cls_vector(example.sentence1);
    const auto first = backend_->tokenize(example.sentence1).size();
    const auto second = backend_->tokenize(*example.sentence2).size();
    std::vector<int> segments(first, 0);
    segments.insert(segments.end(), second, backend_->capabilities().num_pretrained_segments > 1 ? 1 : 0);
    return backend_->cls_vector(example.sentence1 + " " + *example.sentence2, segments);
}

double HeadLearner::train_step(std::span<const LabeledExample> batch, double learning_rate, Rng&) {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty minibatch");
    std::vector<double> grad(head_.weights.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& ex : batch) {
        const auto h = representation(ex);
        if (task_.is_regression()) {
            const double diff = baseline_head_regression(h, head_) - ex.value();
            loss += diff * diff * scale;
            for (std::size_t j = 0; j < h.size(); ++j) grad[j] += scale * 2.0 * diff * h[j];
        } else {
            const auto dist = baseline_head_forward(h, head_);
            const int gold = task_.class_of(ex);
            loss += classification_loss(dist, gold) * scale;
            for (std::size_t r = 0; r < head_.rows; ++r) {
                const double g = dist[r] - (static_cast<int>(r) == gold ? 1.0 : 0.0);
                for (std::size_t j = 0; j < h.size(); ++j) {
                    if (h[j] != 0.0) grad[r * head_.dim + j] += scale * g * h[j];
                }
            }
        }
    }
    if (!std::isfinite(loss)) throw Error(ErrorCode::TrainingDiverged, "non-finite head loss");
    const double step = learning_rate * learning_rate_scale_;
    for (std::size_t i = 0; i < grad.size(); ++i) head_.weights[i] -= step * grad[i];
    ++steps_;
    return loss;
}

std::vector<double> HeadLearner::predict(std::span<const LabeledExample> examples, std::uint64_t) const {
    std::vector<double> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        const auto h = representation(ex);
        out.push_back(task_.is_regression() ? baseline_head_regression(h, head_)
                                            : static_cast<double>(baseline_head_forward(h, head_).argmax()));
    }
    return out;
}

std::unique_ptr<Learner> HeadLearner::clone() const { return std::make_unique<HeadLearner>(*this); }

// ---------------------------------------------------------------------------
// Trials

double evaluate(const Learner& learner, std::span<const LabeledExample> examples, Metric metric, std::uint64_t seed) {
    const auto predictions = learner.predict(examples, seed);
    const auto golds = gold_values(examples, learner.task());
    return compute_metric(predictions, golds, metric);
}

TrainedTrial train_trial(const Learner& initial, const FewShotSplit& split, const TrainConfig& config, Metric metric) {
    if (split.train.empty()) throw Error(ErrorCode::EmptyBatch, "D_train is empty");
    if (config.hyper.batch_size == 0) throw Error(ErrorCode::EmptyBatch, "batch size 0");

    TrainedTrial trial;
    trial.result.hyper = config.hyper;
    trial.result.seed = config.seed;

    auto learner = initial.clone();
    Rng rng(config.seed);
    const std::uint64_t eval_seed = config.seed ^ kEvalSeedSalt;
    const bool has_dev = !split.dev.empty();
    const std::size_t batch_size = std::min(config.hyper.batch_size, split.train.size());

    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();
    std::vector<LabeledExample> batch;
    batch.reserve(batch_size);

    double best_dev = -std::numeric_limits<double>::infinity();
    for (std::size_t step = 1; step <= config.max_steps; ++step) {
        batch.clear();
        while (batch.size() < batch_size) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(split.train[order[cursor++]]);
        }
        learner->train_step(batch, config.hyper.learning_rate, rng);

        const bool last = step == config.max_steps;
        const bool scheduled = config.eval_every > 0 && step % config.eval_every == 0;
        if (has_dev && (scheduled || (last && trial.result.history.empty()))) {
            const double dev = evaluate(*learner, split.dev, metric, eval_seed);
            trial.result.history.push_back({step, dev});
            if (dev > best_dev) {
                best_dev = dev;
                trial.best = learner->clone();
                trial.result.best_step = step;
            }
        }
    }
    if (!has_dev) {
        trial.best = std::move(learner);
        trial.result.best_step = config.max_steps;
    } else {
        trial.result.dev_metric = best_dev;
    }
    return trial;
}

GridResult grid_search(const Learner& initial, const FewShotSplit& split, const Grid& grid, const TrainConfig& base,
                       Metric metric, std::span<const LabeledExample> test) {
    const auto points = grid.points();
    if (points.empty()) throw Error(ErrorCode::InvalidArgument, "empty hyper-parameter grid");

    GridResult result;
    std::optional<std::size_t> best;
    for (const auto& point : points) {
        TrainConfig config = base;
        config.hyper = point;
        TrialResult record;
        try {
            auto trial = train_trial(initial, split, config, metric);
            if (!test.empty()) trial.result.test_metric = evaluate(*trial.best, test, metric, config.seed ^ kEvalSeedSalt);
            record = trial.result;
            const double dev = record.dev_metric.value_or(-std::numeric_limits<double>::infinity());
            if (!best || dev > result.trials[*best].dev_metric.value_or(-std::numeric_limits<double>::infinity())) {
                best = result.trials.size();
                result.best_model = std::move(trial.best);
            }
        } catch (const std::exception& e) {
            spdlog::warn("trial lr={} bs={} failed: {}", point.learning_rate, point.batch_size, e.what());
            record.hyper = point;
            record.seed = config.seed;
            record.error = e.what();
        }
        result.trials.push_back(std::move(record));
    }
    if (!best) throw Error(ErrorCode::NoSuccessfulTrial, "every grid trial failed");
    result.best_index = *best;
    return result;
}

PromptScorer make_fine_tune_scorer(const Backend& initial, const TaskSpec& task, const FewShotSplit& split,
                                   const TrainConfig& config, Metric metric) {
    std::shared_ptr<const Backend> base = initial.clone();
    return [base, task, &split, config, metric](const Prompt& prompt) {
        const PromptLearner learner(base->clone(), PromptModel(task, prompt, *base));
        auto trial = train_trial(learner, split, config, metric);
        if (trial.result.dev_metric) return *trial.result.dev_metric;
        return evaluate(*trial.best, split.train, metric, config.seed ^ kEvalSeedSalt);
    };
}

// ---------------------------------------------------------------------------
// Protocol

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> threads;
        for (std::size_t w = 0; w < std::min(workers, n); ++w) {
            threads.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        const std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

ProtocolResult run_protocol(const Dataset& dataset, const ProtocolConfig& config, const SeedPipeline& pipeline) {
    if (config.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "at least one seed is required");
    ProtocolResult result;
    result.per_seed.resize(config.seeds.size());
    parallel_for(config.seeds.size(), config.workers, [&](std::size_t i) {
        auto& record = result.per_seed[i];
        record.seed = config.seeds[i];
        try {
            const auto split = sample_split(dataset, config.k, record.seed, config.dev_multiplier);
            validate_split(split, dataset.task);
            record.test_metric = pipeline(split);
            record.ok = true;
        } catch (const std::exception& e) {
            spdlog::warn("seed {} failed: {}", record.seed, e.what());
            record.error = e.what();
        }
    });
    std::vector<double> scores;
    for (const auto& r : result.per_seed) {
        if (r.ok) scores.push_back(r.test_metric);
    }
    result.completed = scores.size();
    result.summary = summarize(scores);
    return result;
}

} // namespace clozefit
