#include "clozefit/demonstrations.hpp"

#include "clozefit/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace clozefit {

void DemoConfig::validate() const {
    if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidArgument, "demonstration r must lie in (0, 1]");
    if (num_sets < 1) throw Error(ErrorCode::InvalidArgument, "num_sets must be at least 1");
}

SentenceEmbedding embed_example(const Backend& encoder, const LabeledExample& example) {
    if (example.sentence2) return encoder.sentence_embedding(example.sentence1 + " " + *example.sentence2);
    return encoder.sentence_embedding(example.sentence1);
}

ClassPools build_pools(const LabeledExample& query, const SentenceEmbedding* query_embedding,
                       std::span<const LabeledExample> train, std::span<const SentenceEmbedding> train_embeddings,
                       double r, const TaskSpec& task) {
    if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidArgument, "r must lie in (0, 1]");
    const bool rank = r < 1.0;
    if (rank && (query_embedding == nullptr || train_embeddings.size() != train.size())) {
        throw Error(ErrorCode::InvalidArgument, "similarity filtering needs embeddings for the query and D_train");
    }

    struct Scored {
        std::size_t index;
        double similarity;
    };
    std::vector<std::vector<Scored>> per_class(task.num_classes());
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train[i].id == query.id) continue;
        const double sim = rank ? cosine(*query_embedding, train_embeddings[i]) : 0.0;
        per_class[static_cast<std::size_t>(task.class_of(train[i]))].push_back({i, sim});
    }

    ClassPools pools(per_class.size());
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        auto& scored = per_class[c];
        if (scored.empty()) {
            throw Error(ErrorCode::EmptyClassPool, "no demonstration candidates for class " + std::to_string(c));
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const Scored& a, const Scored& b) { return a.similarity > b.similarity; });
        const auto n = static_cast<double>(scored.size());
        const auto keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(r * n - 1e-9)), 1, scored.size());
        for (std::size_t k = 0; k < keep; ++k) pools[c].push_back(&train[scored[k].index]);
    }
    return pools;
}

DemonstrationSet sample_demo_set(const ClassPools& pools, Rng& rng) {
    DemonstrationSet set;
    set.members.reserve(pools.size());
    for (std::size_t c = 0; c < pools.size(); ++c) {
        if (pools[c].empty()) {
            throw Error(ErrorCode::EmptyClassPool, "empty demonstration pool for class " + std::to_string(c));
        }
        set.members.push_back(pools[c][rng.uniform_index(pools[c].size())]);
    }
    return set;
}

std::string DemoContext::text() const {
    std::string out;
    for (const auto& piece : pieces) {
        auto rendered = piece.str();
        if (rendered.empty()) continue;
        if (!out.empty()) out += ' ';
        out += rendered;
    }
    return out;
}

DemoContext build_context(const LabeledExample& query, std::span<const LabeledExample* const> demos,
                          const Prompt& prompt, const TaskSpec& task, const Backend& backend, std::size_t max_len) {
    DemoContext context;
    context.pieces.push_back(render_chunks(prompt.pattern, query));
    if (backend.input_length(context.text()) > max_len) {
        throw Error(ErrorCode::InputTooLong, "query '" + query.id + "' alone exceeds " + std::to_string(max_len) +
                                                 " tokens");
    }
    for (const auto* demo : demos) {
        const auto& word = prompt.verbalizer.word(task.class_of(*demo));
        context.pieces.push_back(render_chunks(prompt.pattern, *demo, word));
    }
    while (context.pieces.size() > 1 && backend.input_length(context.text()) > max_len) {
        context.pieces.pop_back();
        ++context.dropped;
    }
    if (context.dropped > 0) {
        spdlog::debug("context for '{}' truncated: dropped {} demonstration(s)", query.id, context.dropped);
    }
    return context;
}

std::size_t required_segments(SegmentStrategy strategy, std::size_t num_classes, int sentences_per_example) {
    switch (strategy) {
    case SegmentStrategy::one_seg: return 1;
    case SegmentStrategy::two_seg: return 2;
    case SegmentStrategy::n_seg: return (1 + num_classes) * static_cast<std::size_t>(sentences_per_example);
    }
    return 1;
}

std::vector<int> assign_segments(const DemoContext& context, SegmentStrategy strategy, std::size_t num_classes,
                                 int sentences_per_example, const Backend& backend) {
    const auto caps = backend.capabilities();
    const auto needed = required_segments(strategy, num_classes, sentences_per_example);
    if (needed > caps.num_pretrained_segments && !caps.can_grow_segments) {
        throw Error(ErrorCode::CapabilityError, "strategy needs " + std::to_string(needed) +
                                                    " segments, backend provides " +
                                                    std::to_string(caps.num_pretrained_segments));
    }
    std::vector<int> ids;
    for (std::size_t p = 0; p < context.pieces.size(); ++p) {
        for (const auto& chunk : context.pieces[p].chunks) {
            int id = 0;
            switch (strategy) {
            case SegmentStrategy::one_seg: id = 0; break;
            case SegmentStrategy::two_seg: id = p == 0 ? 0 : 1; break;
            case SegmentStrategy::n_seg:
                id = static_cast<int>(p) * sentences_per_example + std::max(chunk.slot, 1) - 1;
                break;
            }
            const auto count = backend.tokenize(chunk.text).size();
            ids.insert(ids.end(), count, id);
        }
    }
    if (ids.size() != backend.tokenize(context.text()).size()) {
        throw Error(ErrorCode::SegmentMismatch, "chunk tokenization does not align with the joined context");
    }
    return ids;
}

ClassDistribution ensemble_from_sets(const LabeledExample& query, std::span<const DemonstrationSet> sets,
                                     const Prompt& prompt, std::span<const int> label_tokens, const TaskSpec& task,
                                     const Backend& backend, const EnsembleOptions& options) {
    if (sets.empty()) throw Error(ErrorCode::InvalidArgument, "ensemble needs at least one demonstration set");
    std::vector<std::vector<double>> per_class(label_tokens.size());
    for (const auto& set : sets) {
        const auto context = build_context(query, set.members, prompt, task, backend, options.max_len);
        const auto text = context.text();
        std::vector<int> segments;
        if (options.segment_strategy != SegmentStrategy::one_seg) {
            segments = assign_segments(context, options.segment_strategy, task.num_classes(),
                                       task.sentences_per_example(), backend);
        }
        const auto log_probs = class_log_probabilities(backend.mask_logits(text, segments), label_tokens);
        for (std::size_t c = 0; c < log_probs.size(); ++c) per_class[c].push_back(log_probs[c]);
    }
    MaskLogits mean;
    for (auto& values : per_class) {
        // Summing in sorted order keeps the mean independent of set order.
        std::sort(values.begin(), values.end());
        mean.values.push_back(std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size()));
    }
    std::vector<int> rows(label_tokens.size());
    std::iota(rows.begin(), rows.end(), 0);
    return class_probabilities(mean, rows);
}

ClassDistribution ensemble_predict(const LabeledExample& query, const ClassPools& pools, const Prompt& prompt,
                                   std::span<const int> label_tokens, const TaskSpec& task, const Backend& backend,
                                   std::size_t num_sets, Rng& rng, const EnsembleOptions& options) {
    if (num_sets < 1) throw Error(ErrorCode::InvalidArgument, "num_sets must be at least 1");
    std::vector<DemonstrationSet> sets;
    sets.reserve(num_sets);
    for (std::size_t i = 0; i < num_sets; ++i) sets.push_back(sample_demo_set(pools, rng));
    return ensemble_from_sets(query, sets, prompt, label_tokens, task, backend, options);
}

DemoSource make_demo_source(const DemoConfig& config, std::vector<LabeledExample> train, const Backend* encoder) {
    config.validate();
    DemoSource source{config, std::move(train), {}, encoder};
    if (config.sampling_mode == SamplingMode::selective) {
        if (encoder == nullptr) throw Error(ErrorCode::InvalidArgument, "selective sampling needs a sentence encoder");
        source.embeddings.reserve(source.train.size());
        for (const auto& ex : source.train) source.embeddings.push_back(embed_example(*encoder, ex));
    }
    return source;
}

// ---------------------------------------------------------------------------

PromptModel::PromptModel(TaskSpec task, Prompt prompt, const Backend& backend, std::optional<DemoSource> demos)
    : task_(std::move(task)), prompt_(std::move(prompt)), demos_(std::move(demos)) {
    if (prompt_.verbalizer.size() != task_.num_classes()) {
        throw Error(ErrorCode::UnknownLabel, "verbalizer covers " + std::to_string(prompt_.verbalizer.size()) +
                                                 " labels, task has " + std::to_string(task_.num_classes()));
    }
    if (prompt_.pattern.references_slot(2) && !task_.pair) {
        throw Error(ErrorCode::SlotUnfilled, "template uses <S2> but the task has single sentences");
    }
    label_tokens_ = resolve_label_tokens(prompt_.verbalizer, backend);
    if (demos_) demos_->config.validate();
}

ClassPools PromptModel::pools_for(const LabeledExample& query) const {
    const auto& source = *demos_;
    if (source.config.sampling_mode == SamplingMode::uniform) {
        return build_pools(query, nullptr, source.train, {}, 1.0, task_);
    }
    const auto query_embedding = embed_example(*source.encoder, query);
    return build_pools(query, &query_embedding, source.train, source.embeddings, source.config.r, task_);
}

DemonstrationSet PromptModel::sample_training_demos(const LabeledExample& example, Rng& rng) const {
    if (!demos_) return {};
    return sample_demo_set(pools_for(example), rng);
}

DemoContext PromptModel::context_for(const Backend& backend, const LabeledExample& query,
                                     const DemonstrationSet* set) const {
    std::span<const LabeledExample* const> members;
    if (set != nullptr) members = set->members;
    return build_context(query, members, prompt_, task_, backend, backend.capabilities().max_input_length);
}

ClassDistribution PromptModel::predict(const Backend& backend, const LabeledExample& query, Rng& rng) const {
    if (!demos_) {
        return class_probabilities(backend.mask_logits(render(prompt_.pattern, query)), label_tokens_);
    }
    const EnsembleOptions options{demos_->config.segment_strategy, backend.capabilities().max_input_length};
    return ensemble_predict(query, pools_for(query), prompt_, label_tokens_, task_, backend, demos_->config.num_sets,
                            rng, options);
}

double PromptModel::predict_label(const Backend& backend, const LabeledExample& query, Rng& rng) const {
    const auto dist = predict(backend, query, rng);
    if (task_.is_regression()) {
        const auto& spec = task_.regression_spec();
        return regression_predict(dist[static_cast<std::size_t>(spec.upper_class)], spec);
    }
    return static_cast<double>(dist.argmax());
}

TrainItem PromptModel::train_item(const Backend& backend, const LabeledExample& example, Rng& rng) const {
    TrainItem item;
    if (demos_) {
        const auto set = sample_training_demos(example, rng);
        const auto context = context_for(backend, example, &set);
        item.text = context.text();
        if (demos_->config.segment_strategy != SegmentStrategy::one_seg) {
            item.segments = assign_segments(context, demos_->config.segment_strategy, task_.num_classes(),
                                            task_.sentences_per_example(), backend);
        }
    } else {
        item.text = render(prompt_.pattern, example);
    }
    if (task_.is_regression()) {
        const auto& spec = task_.regression_spec();
        item.loss = regression_mask_loss(label_tokens_[static_cast<std::size_t>(spec.lower_class)],
                                         label_tokens_[static_cast<std::size_t>(spec.upper_class)],
                                         regression_target(example.value(), spec));
    } else {
        item.loss = classification_mask_loss(label_tokens_, task_.class_of(example));
    }
    return item;
}

} // namespace clozefit
