#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clozefit {

/// Pre-softmax scores at the mask position, one per vocabulary token.
struct MaskLogits {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
};

/// Unit-norm sentence vector.
struct SentenceEmbedding {
    std::vector<double> values;
};

double cosine(const SentenceEmbedding& a, const SentenceEmbedding& b);

struct BackendCapabilities {
    std::size_t vocab_size = 0; // masked-LM vocabulary, 0 without one
    std::size_t max_input_length = 512;
    bool supports_training = false;
    bool supports_generation = false;
    bool supports_segments = false;
    bool supports_embedding = false;
    /// Segment ids the backend ships with; more can be added only when
    /// `can_grow_segments` is set.
    std::size_t num_pretrained_segments = 1;
    bool can_grow_segments = false;
};

/// Loss over the mask logits of one input. Writes d(loss)/d(logit) for every
/// vocabulary entry into `grad` (pre-sized, zeroed) and returns the loss.
using MaskLoss = std::function<double(std::span<const double> logits, std::span<double> grad)>;

struct TrainItem {
    std::string text;
    std::vector<int> segments; // empty: all segment 0
    MaskLoss loss;
};

/// Contract for the language models the toolkit drives.
///
/// A single interface covers the masked LM, the span-infilling generator and
/// the sentence encoder; an implementation advertises what it supports in
/// `capabilities()` and the remaining operations raise CapabilityError.
///
/// Tokenization, including begin/end wrapping markers, belongs to the backend.
/// Callers pass rendered text containing the abstract mask marker `[MASK]`.
///
/// Read-only operations may run concurrently; `train_step` and
/// `ensure_segments` need exclusive access.
class Backend {
public:
    virtual ~Backend() = default;

    virtual BackendCapabilities capabilities() const = 0;
    virtual std::unique_ptr<Backend> clone() const = 0;

    // -- tokenizer --------------------------------------------------------
    /// Content token ids, without wrapping markers.
    virtual std::vector<int> tokenize(std::string_view text) const;
    /// Tokenized length including wrapping markers.
    virtual std::size_t input_length(std::string_view text) const;
    virtual std::string token_text(int token) const;
    /// Token id of `word` written with a leading space, if that is exactly
    /// one known token.
    virtual std::optional<int> word_token(std::string_view word) const;
    /// Tokens eligible as label words (specials excluded), ascending.
    virtual std::vector<int> label_word_candidates() const;

    // -- masked LM ----------------------------------------------------------
    virtual MaskLogits mask_logits(std::string_view text, std::span<const int> segments = {}) const;
    /// One optimizer step over the minibatch; returns the pre-update mean loss.
    virtual double train_step(std::span<const TrainItem> batch, double learning_rate);
    /// Representation the standard fine-tuning head reads (h_[CLS]).
    virtual std::vector<double> cls_vector(std::string_view text, std::span<const int> segments = {}) const;
    virtual std::size_t hidden_size() const;
    virtual std::size_t parameter_count() const;
    virtual std::uint64_t parameter_hash() const;
    /// Adds freshly initialized segment embeddings up to `count`.
    virtual void ensure_segments(std::size_t count);

    // -- span generator -----------------------------------------------------
    virtual std::size_t generator_vocab_size() const;
    virtual std::string generator_token_text(int token) const;
    /// Log-distribution over the generator vocabulary for the next token.
    virtual std::vector<double> next_token_log_probs(std::span<const int> prefix,
                                                     std::string_view conditioning) const;
    double token_log_prob(std::span<const int> prefix, int next, std::string_view conditioning) const;

    // -- sentence encoder ---------------------------------------------------
    virtual SentenceEmbedding sentence_embedding(std::string_view text) const;
};

/// FNV-1a over a parameter buffer; used for "parameters unchanged" checks.
std::uint64_t hash_parameters(std::span<const double> params);

} // namespace clozefit
