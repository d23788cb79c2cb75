#pragma once

#include "clozefit/model_backend.hpp"
#include "clozefit/prompt_inference.hpp"
#include "clozefit/prompt_schema.hpp"
#include "clozefit/rng.hpp"
#include "clozefit/task.hpp"

#include <optional>
#include <span>
#include <vector>

namespace clozefit {

enum class SamplingMode { uniform, selective };
enum class SegmentStrategy { one_seg, two_seg, n_seg };

struct DemoConfig {
    double r = 0.5;             // fraction of each class kept by similarity filtering
    std::size_t num_sets = 16;  // demonstration sets averaged at inference
    SamplingMode sampling_mode = SamplingMode::selective;
    SegmentStrategy segment_strategy = SegmentStrategy::one_seg;

    void validate() const;
};

/// Candidate demonstrations per class, most similar first.
using ClassPools = std::vector<std::vector<const LabeledExample*>>;

/// One member per class, in class-id order.
struct DemonstrationSet {
    std::vector<const LabeledExample*> members;
};

/// Embedding of an example's raw input; pairs are joined with one space.
SentenceEmbedding embed_example(const Backend& encoder, const LabeledExample& example);

/// Per class, the top ceil(r * n) training examples by cosine similarity to
/// the query, where n excludes the query itself. With r == 1 the embeddings
/// may be empty and pools keep training order.
ClassPools build_pools(const LabeledExample& query, const SentenceEmbedding* query_embedding,
                       std::span<const LabeledExample> train, std::span<const SentenceEmbedding> train_embeddings,
                       double r, const TaskSpec& task);

DemonstrationSet sample_demo_set(const ClassPools& pools, Rng& rng);

/// Rendered query followed by filled demonstrations.
struct DemoContext {
    std::vector<RenderedText> pieces; // pieces[0] is the query
    std::size_t dropped = 0;          // demonstrations removed to fit the budget

    std::string text() const;
};

/// Query with the mask first, then each demonstration filled with its label
/// word. Whole demonstrations are dropped from the end until the input fits
/// `max_len` backend tokens.
DemoContext build_context(const LabeledExample& query, std::span<const LabeledExample* const> demos,
                          const Prompt& prompt, const TaskSpec& task, const Backend& backend, std::size_t max_len);

std::size_t required_segments(SegmentStrategy strategy, std::size_t num_classes, int sentences_per_example);

/// Segment id for each content token of `context.text()`.
std::vector<int> assign_segments(const DemoContext& context, SegmentStrategy strategy, std::size_t num_classes,
                                 int sentences_per_example, const Backend& backend);

struct EnsembleOptions {
    SegmentStrategy segment_strategy = SegmentStrategy::one_seg;
    std::size_t max_len = 512;
};

/// Averages per-class log-probabilities over the given sets and renormalizes.
/// The result does not depend on the order of `sets`.
ClassDistribution ensemble_from_sets(const LabeledExample& query, std::span<const DemonstrationSet> sets,
                                     const Prompt& prompt, std::span<const int> label_tokens, const TaskSpec& task,
                                     const Backend& backend, const EnsembleOptions& options);

ClassDistribution ensemble_predict(const LabeledExample& query, const ClassPools& pools, const Prompt& prompt,
                                   std::span<const int> label_tokens, const TaskSpec& task, const Backend& backend,
                                   std::size_t num_sets, Rng& rng, const EnsembleOptions& options);

/// Everything a prompt model needs to draw demonstrations from D_train.
struct DemoSource {
    DemoConfig config;
    std::vector<LabeledExample> train;
    std::vector<SentenceEmbedding> embeddings; // empty for uniform sampling
    const Backend* encoder = nullptr;          // required for selective sampling
};

DemoSource make_demo_source(const DemoConfig& config, std::vector<LabeledExample> train,
                            const Backend* encoder);

/// Prompt-based classifier over a backend: restricted-softmax probabilities, optionally
/// with demonstrations. Adds no parameters of its own.
class PromptModel {
public:
    PromptModel(TaskSpec task, Prompt prompt, const Backend& backend, std::optional<DemoSource> demos = {});

    /// Class (or pole) distribution. Uses `rng` only when demonstrations are on.
    ClassDistribution predict(const Backend& backend, const LabeledExample& query, Rng& rng) const;
    /// Class id for classification, interpolated value for regression.
    double predict_label(const Backend& backend, const LabeledExample& query, Rng& rng) const;
    /// Training input for one example; demonstrations come from the same
    /// training set, never the example itself.
    TrainItem train_item(const Backend& backend, const LabeledExample& example, Rng& rng) const;

    const TaskSpec& task() const noexcept { return task_; }
    const Prompt& prompt() const noexcept { return prompt_; }
    const std::vector<int>& label_tokens() const noexcept { return label_tokens_; }
    const std::optional<DemoSource>& demos() const noexcept { return demos_; }

    /// Demonstration set a training input for `example` would use.
    DemonstrationSet sample_training_demos(const LabeledExample& example, Rng& rng) const;

private:
    ClassPools pools_for(const LabeledExample& query) const;
    DemoContext context_for(const Backend& backend, const LabeledExample& query, const DemonstrationSet* set) const;

    TaskSpec task_;
    Prompt prompt_;
    std::vector<int> label_tokens_;
    std::optional<DemoSource> demos_;
};

} // namespace clozefit
