#pragma once

#include "clozefit/model_backend.hpp"

#include <filesystem>
#include <map>
#include <unordered_map>
#include <utility>

namespace clozefit {

/// Lowercased word/punctuation split shared by the toy components. `[MASK]`
/// survives as a single piece.
std::vector<std::string> toy_word_split(std::string_view text);

struct ToyMlmOptions {
    std::uint64_t seed = 7;
    std::size_t max_input_length = 512;
    std::size_t num_segments = 2;
    double init_scale = 0.02;
    /// Multiplier on the requested learning rate. The default hyper-parameter
    /// grid is tuned for transformer fine-tuning; plain gradient descent on a
    /// linear model needs much larger steps.
    double learning_rate_scale = 1e4;
    bool trainable = true;
};

/// Bag-of-words masked LM: per-segment token counts scaled by
/// 1/sqrt(segment length) feed a linear map to vocabulary logits
/// (logits = W h + b). Trained with momentum-free gradient descent.
class ToyMaskedLm final : public Backend {
public:
    static constexpr int kUnk = 0;
    static constexpr int kCls = 1;
    static constexpr int kSep = 2;
    static constexpr int kMask = 3;
    static constexpr int kNumSpecial = 4;

    /// `words` are added after the special tokens, lowercased and deduplicated.
    ToyMaskedLm(const std::vector<std::string>& words, ToyMlmOptions options = {});

    BackendCapabilities capabilities() const override;
    std::unique_ptr<Backend> clone() const override;

    std::vector<int> tokenize(std::string_view text) const override;
    std::size_t input_length(std::string_view text) const override;
    std::string token_text(int token) const override;
    std::optional<int> word_token(std::string_view word) const override;
    std::vector<int> label_word_candidates() const override;

    MaskLogits mask_logits(std::string_view text, std::span<const int> segments = {}) const override;
    double train_step(std::span<const TrainItem> batch, double learning_rate) override;
    std::vector<double> cls_vector(std::string_view text, std::span<const int> segments = {}) const override;
    std::size_t hidden_size() const override;
    std::size_t parameter_count() const override;
    std::uint64_t parameter_hash() const override;
    void ensure_segments(std::size_t count) override;

    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    std::size_t num_segments() const noexcept { return num_segments_; }
    const ToyMlmOptions& options() const noexcept { return options_; }

    /// Flat parameter view: W row-major (vocab x hidden) followed by b.
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    /// Mean loss of a batch at the current parameters, no update.
    double batch_loss(std::span<const TrainItem> batch) const;
    /// Mean-loss gradient with respect to `parameters()`.
    std::vector<double> batch_gradient(std::span<const TrainItem> batch) const;

    /// Binary fixture: header (magic, seed, vocab, segments) + vocabulary +
    /// flat parameter array.
    void save(const std::filesystem::path& path) const;
    static ToyMaskedLm load(const std::filesystem::path& path, ToyMlmOptions options = {});

private:
    using SparseFeatures = std::vector<std::pair<std::size_t, double>>;

    SparseFeatures features(std::span<const int> tokens, std::span<const int> segments) const;
    std::vector<double> logits_from(const SparseFeatures& h) const;
    void accumulate(std::span<const TrainItem> batch, std::vector<double>* grad, double* loss) const;

    ToyMlmOptions options_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> index_;
    std::size_t num_segments_;
    std::vector<double> params_;
};

/// Span-infilling generator backed by a conditional probability table.
///
/// A row is selected by (condition key, previous token); the condition key of
/// an input is the word right after `<X>` (the label word). Lookup falls back
/// from the exact key to the wildcard key "" and then to a uniform row.
class ToyGenerator final : public Backend {
public:
    static constexpr int kStart = -1; // previous-token id of an empty prefix

    explicit ToyGenerator(std::vector<std::string> vocab);

    BackendCapabilities capabilities() const override;
    std::unique_ptr<Backend> clone() const override;

    std::size_t generator_vocab_size() const override { return vocab_.size(); }
    std::string generator_token_text(int token) const override;
    std::vector<double> next_token_log_probs(std::span<const int> prefix,
                                             std::string_view conditioning) const override;

    /// Sets a row from non-negative weights (normalized here).
    void set_row(std::string key, int previous, std::span<const double> weights);
    std::optional<int> find_token(std::string_view text) const;

    static std::string condition_key(std::string_view conditioning);

    /// JSON table: {"vocab": [...], "rows": [{"key": str, "prev": str|null, "probs": [...]}]}.
    static ToyGenerator from_json_file(const std::filesystem::path& path);

private:
    std::vector<std::string> vocab_;
    std::map<std::pair<std::string, int>, std::vector<double>> rows_;
};

/// Hashed bag-of-words sentence encoder (FNV-1a buckets, L2-normalized).
class HashBagEncoder final : public Backend {
public:
    explicit HashBagEncoder(std::size_t dim = 1024) : dim_(dim) {}

    BackendCapabilities capabilities() const override;
    std::unique_ptr<Backend> clone() const override;
    SentenceEmbedding sentence_embedding(std::string_view text) const override;

    std::size_t bucket(std::string_view token) const;
    std::size_t dim() const noexcept { return dim_; }

private:
    std::size_t dim_;
};

} // namespace clozefit
