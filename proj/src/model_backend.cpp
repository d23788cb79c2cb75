#include "clozefit/model_backend.hpp"

#include "clozefit/error.hpp"

#include <cmath>
#include <cstring>

namespace clozefit {

namespace {

[[noreturn]] void unsupported(const char* op) {
    throw Error(ErrorCode::CapabilityError, std::string("backend does not support ") + op);
}

} // namespace

double cosine(const SentenceEmbedding& a, const SentenceEmbedding& b) {
    if (a.values.size() != b.values.size()) {
        throw Error(ErrorCode::ShapeError, "embedding dimensions differ");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

std::vector<int> Backend::tokenize(std::string_view) const { unsupported("tokenize"); }
std::size_t Backend::input_length(std::string_view text) const { return tokenize(text).size(); }
std::string Backend::token_text(int) const { unsupported("token_text"); }
std::optional<int> Backend::word_token(std::string_view) const { unsupported("word_token"); }
std::vector<int> Backend::label_word_candidates() const { unsupported("label_word_candidates"); }
MaskLogits Backend::mask_logits(std::string_view, std::span<const int>) const { unsupported("mask_logits"); }
double Backend::train_step(std::span<const TrainItem>, double) { unsupported("train_step"); }
std::vector<double> Backend::cls_vector(std::string_view, std::span<const int>) const { unsupported("cls_vector"); }
std::size_t Backend::hidden_size() const { unsupported("hidden_size"); }
std::size_t Backend::parameter_count() const { return 0; }
std::uint64_t Backend::parameter_hash() const { return hash_parameters({}); }
void Backend::ensure_segments(std::size_t count) {
    if (count > capabilities().num_pretrained_segments) unsupported("additional segments");
}
std::size_t Backend::generator_vocab_size() const { unsupported("generation"); }
std::string Backend::generator_token_text(int) const { unsupported("generation"); }
std::vector<double> Backend::next_token_log_probs(std::span<const int>, std::string_view) const {
    unsupported("generation");
}
SentenceEmbedding Backend::sentence_embedding(std::string_view) const { unsupported("sentence embeddings"); }

double Backend::token_log_prob(std::span<const int> prefix, int next, std::string_view conditioning) const {
    const auto row = next_token_log_probs(prefix, conditioning);
    if (next < 0 || static_cast<std::size_t>(next) >= row.size()) {
        throw Error(ErrorCode::UnknownToken, "generator token " + std::to_string(next) + " out of range");
    }
    return row[static_cast<std::size_t>(next)];
}

std::uint64_t hash_parameters(std::span<const double> params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const double p : params) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &p, sizeof(double));
        for (const unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

} // namespace clozefit
