#include "clozefit/toy_backend.hpp"

#include "clozefit/error.hpp"
#include "clozefit/prompt_schema.hpp"
#include "clozefit/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

namespace clozefit {

namespace {

constexpr char kFixtureMagic[8] = {'C', 'L', 'Z', 'T', 'O', 'Y', '0', '1'};

bool is_split_punct(char c) {
    switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':':
    case '"': case '(': case ')': case '\'':
        return true;
    default:
        return false;
    }
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw Error(ErrorCode::ParseError, "truncated toy backend fixture");
    return value;
}

} // namespace

std::vector<std::string> toy_word_split(std::string_view text) {
    std::vector<std::string> pieces;
    std::string current;
    const auto flush = [&] {
        if (!current.empty()) pieces.push_back(std::exchange(current, {}));
    };
    for (std::size_t i = 0; i < text.size();) {
        const char c = text[i];
        if (text.substr(i).starts_with(kMaskMarker)) {
            flush();
            pieces.emplace_back(kMaskMarker);
            i += kMaskMarker.size();
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            flush();
            ++i;
        } else if (is_split_punct(c)) {
            flush();
            pieces.emplace_back(1, c);
            ++i;
        } else {
            current += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
            ++i;
        }
    }
    flush();
    return pieces;
}

// ---------------------------------------------------------------------------
// ToyMaskedLm

ToyMaskedLm::ToyMaskedLm(const std::vector<std::string>& words, ToyMlmOptions options)
    : options_(options), num_segments_(std::max<std::size_t>(1, options.num_segments)) {
    vocab_ = {"[UNK]", "[CLS]", "[SEP]", std::string(kMaskMarker)};
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], static_cast<int>(i));
    for (const auto& word : words) {
        for (auto& piece : toy_word_split(word)) {
            if (index_.contains(piece)) continue;
            index_.emplace(piece, static_cast<int>(vocab_.size()));
            vocab_.push_back(std::move(piece));
        }
    }
    if (options_.max_input_length < 16) {
        throw Error(ErrorCode::InvalidArgument, "max_input_length must be at least 16");
    }
    const std::size_t v = vocab_.size();
    params_.assign(v * v * num_segments_ + v, 0.0);
    Rng rng(options_.seed);
    if (options_.init_scale > 0.0) {
        for (std::size_t i = 0; i < v * v * num_segments_; ++i) params_[i] = rng.normal(0.0, options_.init_scale);
    }
}

BackendCapabilities ToyMaskedLm::capabilities() const {
    BackendCapabilities caps;
    caps.vocab_size = vocab_.size();
    caps.max_input_length = options_.max_input_length;
    caps.supports_training = options_.trainable;
    caps.supports_segments = true;
    caps.num_pretrained_segments = num_segments_;
    caps.can_grow_segments = true;
    return caps;
}

std::unique_ptr<Backend> ToyMaskedLm::clone() const { return std::make_unique<ToyMaskedLm>(*this); }

std::vector<int> ToyMaskedLm::tokenize(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& piece : toy_word_split(text)) {
        const auto it = index_.find(piece);
        ids.push_back(it == index_.end() ? kUnk : it->second);
    }
    return ids;
}

std::size_t ToyMaskedLm::input_length(std::string_view text) const { return tokenize(text).size() + 2; }

std::string ToyMaskedLm::token_text(int token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= vocab_.size()) {
        throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(token) + " out of range");
    }
    return vocab_[static_cast<std::size_t>(token)];
}

std::optional<int> ToyMaskedLm::word_token(std::string_view word) const {
    const auto ids = tokenize(" " + std::string(word));
    if (ids.size() != 1 || ids[0] < kNumSpecial) return std::nullopt;
    return ids[0];
}

std::vector<int> ToyMaskedLm::label_word_candidates() const {
    std::vector<int> ids;
    for (int t = kNumSpecial; t < static_cast<int>(vocab_.size()); ++t) ids.push_back(t);
    return ids;
}

ToyMaskedLm::SparseFeatures ToyMaskedLm::features(std::span<const int> tokens,
                                                  std::span<const int> segments) const {
    if (!segments.empty() && segments.size() != tokens.size()) {
        throw Error(ErrorCode::SegmentMismatch, "segment ids (" + std::to_string(segments.size()) +
                                                    ") do not match token count (" +
                                                    std::to_string(tokens.size()) + ")");
    }
    const std::size_t v = vocab_.size();
    std::map<std::size_t, double> counts;
    std::vector<double> per_segment(num_segments_, 0.0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == kMask) continue;
        const int seg = segments.empty() ? 0 : segments[i];
        if (seg < 0 || static_cast<std::size_t>(seg) >= num_segments_) {
            throw Error(ErrorCode::SegmentMismatch, "segment id " + std::to_string(seg) + " not available");
        }
        counts[static_cast<std::size_t>(seg) * v + static_cast<std::size_t>(tokens[i])] += 1.0;
        per_segment[static_cast<std::size_t>(seg)] += 1.0;
    }
    SparseFeatures h;
    h.reserve(counts.size());
    for (const auto& [index, count] : counts) {
        h.emplace_back(index, count / std::sqrt(per_segment[index / v]));
    }
    return h;
}

std::vector<double> ToyMaskedLm::logits_from(const SparseFeatures& h) const {
    const std::size_t v = vocab_.size();
    const std::size_t hidden = hidden_size();
    std::vector<double> logits(params_.begin() + static_cast<std::ptrdiff_t>(v * hidden), params_.end());
    for (std::size_t row = 0; row < v; ++row) {
        const double* w = params_.data() + row * hidden;
        double acc = 0.0;
        for (const auto& [j, x] : h) acc += w[j] * x;
        logits[row] += acc;
    }
    return logits;
}

MaskLogits ToyMaskedLm::mask_logits(std::string_view text, std::span<const int> segments) const {
    const auto tokens = tokenize(text);
    if (tokens.size() + 2 > options_.max_input_length) {
        throw Error(ErrorCode::InputTooLong, "input of " + std::to_string(tokens.size() + 2) +
                                                 " tokens exceeds " + std::to_string(options_.max_input_length));
    }
    const auto masks = std::count(tokens.begin(), tokens.end(), kMask);
    if (masks != 1) {
        throw Error(ErrorCode::NoMaskPresent, "expected exactly one mask token, found " + std::to_string(masks));
    }
    return MaskLogits{logits_from(features(tokens, segments))};
}

std::vector<double> ToyMaskedLm::cls_vector(std::string_view text, std::span<const int> segments) const {
    const auto tokens = tokenize(text);
    std::vector<double> dense(hidden_size(), 0.0);
    for (const auto& [j, x] : features(tokens, segments)) dense[j] = x;
    return dense;
}

std::size_t ToyMaskedLm::hidden_size() const { return vocab_.size() * num_segments_; }
std::size_t ToyMaskedLm::parameter_count() const { return params_.size(); }
std::uint64_t ToyMaskedLm::parameter_hash() const { return hash_parameters(params_); }

void ToyMaskedLm::accumulate(std::span<const TrainItem> batch, std::vector<double>* grad, double* loss) const {
    const std::size_t v = vocab_.size();
    const std::size_t hidden = hidden_size();
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<double> dlogits(v);
    double total = 0.0;
    for (const auto& item : batch) {
        const auto tokens = tokenize(item.text);
        if (tokens.size() + 2 > options_.max_input_length) {
            throw Error(ErrorCode::InputTooLong, "training input exceeds the context size");
        }
        const auto h = features(tokens, item.segments);
        const auto logits = logits_from(h);
        std::fill(dlogits.begin(), dlogits.end(), 0.0);
        total += item.loss(logits, dlogits);
        if (grad == nullptr) continue;
        for (std::size_t row = 0; row < v; ++row) {
            const double g = dlogits[row];
            if (g == 0.0) continue;
            double* w = grad->data() + row * hidden;
            for (const auto& [j, x] : h) w[j] += scale * g * x;
            (*grad)[v * hidden + row] += scale * g;
        }
    }
    *loss = total * scale;
}

double ToyMaskedLm::batch_loss(std::span<const TrainItem> batch) const {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty minibatch");
    double loss = 0.0;
    accumulate(batch, nullptr, &loss);
    return loss;
}

std::vector<double> ToyMaskedLm::batch_gradient(std::span<const TrainItem> batch) const {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty minibatch");
    std::vector<double> grad(params_.size(), 0.0);
    double loss = 0.0;
    accumulate(batch, &grad, &loss);
    return grad;
}

double ToyMaskedLm::train_step(std::span<const TrainItem> batch, double learning_rate) {
    if (!options_.trainable) throw Error(ErrorCode::CapabilityError, "backend is frozen");
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "empty minibatch");
    std::vector<double> grad(params_.size(), 0.0);
    double loss = 0.0;
    accumulate(batch, &grad, &loss);
    if (!std::isfinite(loss)) throw Error(ErrorCode::TrainingDiverged, "non-finite training loss");
    const double step = learning_rate * options_.learning_rate_scale;
    if (step != 0.0) {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= step * grad[i];
    }
    return loss;
}

void ToyMaskedLm::ensure_segments(std::size_t count) {
    if (count <= num_segments_) return;
    const std::size_t v = vocab_.size();
    const std::size_t old_hidden = hidden_size();
    const std::size_t new_hidden = v * count;
    std::vector<double> grown(v * new_hidden + v, 0.0);
    Rng rng(options_.seed ^ (0xA5A5ULL + count));
    for (std::size_t row = 0; row < v; ++row) {
        std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(row * old_hidden), old_hidden,
                    grown.begin() + static_cast<std::ptrdiff_t>(row * new_hidden));
        for (std::size_t j = old_hidden; j < new_hidden; ++j) {
            grown[row * new_hidden + j] = rng.normal(0.0, options_.init_scale);
        }
    }
    std::copy(params_.end() - static_cast<std::ptrdiff_t>(v), params_.end(),
              grown.end() - static_cast<std::ptrdiff_t>(v));
    params_ = std::move(grown);
    num_segments_ = count;
}

void ToyMaskedLm::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(kFixtureMagic, sizeof(kFixtureMagic));
    write_pod(out, options_.seed);
    write_pod(out, static_cast<std::uint32_t>(vocab_.size()));
    write_pod(out, static_cast<std::uint32_t>(num_segments_));
    for (const auto& word : vocab_) {
        write_pod(out, static_cast<std::uint32_t>(word.size()));
        out.write(word.data(), static_cast<std::streamsize>(word.size()));
    }
    write_pod(out, static_cast<std::uint64_t>(params_.size()));
    out.write(reinterpret_cast<const char*>(params_.data()),
              static_cast<std::streamsize>(params_.size() * sizeof(double)));
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

ToyMaskedLm ToyMaskedLm::load(const std::filesystem::path& path, ToyMlmOptions options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    char magic[sizeof(kFixtureMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kFixtureMagic, sizeof(magic)) != 0) {
        throw Error(ErrorCode::ParseError, path.string() + " is not a toy backend fixture");
    }
    options.seed = read_pod<std::uint64_t>(in);
    const auto vocab_size = read_pod<std::uint32_t>(in);
    options.num_segments = read_pod<std::uint32_t>(in);
    std::vector<std::string> words;
    for (std::uint32_t i = 0; i < vocab_size; ++i) {
        const auto len = read_pod<std::uint32_t>(in);
        std::string word(len, '\0');
        in.read(word.data(), len);
        if (!in) throw Error(ErrorCode::ParseError, "truncated vocabulary in " + path.string());
        if (i >= kNumSpecial) words.push_back(std::move(word));
    }
    options.init_scale = 0.0;
    ToyMaskedLm model(words, options);
    if (model.vocab_size() != vocab_size) {
        throw Error(ErrorCode::ParseError, "vocabulary in " + path.string() + " is not canonical");
    }
    const auto count = read_pod<std::uint64_t>(in);
    if (count != model.params_.size()) throw Error(ErrorCode::ShapeError, "parameter count mismatch");
    in.read(reinterpret_cast<char*>(model.params_.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw Error(ErrorCode::ParseError, "truncated parameters in " + path.string());
    return model;
}

// ---------------------------------------------------------------------------
// ToyGenerator

ToyGenerator::ToyGenerator(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
    if (vocab_.empty()) throw Error(ErrorCode::InvalidArgument, "generator vocabulary is empty");
}

BackendCapabilities ToyGenerator::capabilities() const {
    BackendCapabilities caps;
    caps.vocab_size = 0; // no masked LM; see generator_vocab_size()
    caps.supports_generation = true;
    return caps;
}

std::unique_ptr<Backend> ToyGenerator::clone() const { return std::make_unique<ToyGenerator>(*this); }

std::string ToyGenerator::generator_token_text(int token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= vocab_.size()) {
        throw Error(ErrorCode::UnknownToken, "generator token " + std::to_string(token) + " out of range");
    }
    return vocab_[static_cast<std::size_t>(token)];
}

std::optional<int> ToyGenerator::find_token(std::string_view text) const {
    const auto it = std::find(vocab_.begin(), vocab_.end(), text);
    if (it == vocab_.end()) return std::nullopt;
    return static_cast<int>(it - vocab_.begin());
}

std::string ToyGenerator::condition_key(std::string_view conditioning) {
    const auto pos = conditioning.find("<X>");
    if (pos == std::string_view::npos) return {};
    auto rest = conditioning.substr(pos + 3);
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    return std::string(rest.substr(0, rest.find(' ')));
}

void ToyGenerator::set_row(std::string key, int previous, std::span<const double> weights) {
    if (weights.size() != vocab_.size()) throw Error(ErrorCode::ShapeError, "row length != generator vocab");
    double total = 0.0;
    for (const double w : weights) {
        if (!(w >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative generator weight");
        total += w;
    }
    if (total <= 0.0) throw Error(ErrorCode::InvalidArgument, "generator row has no mass");
    std::vector<double> row(weights.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        row[i] = weights[i] > 0.0 ? std::log(weights[i] / total) : -std::numeric_limits<double>::infinity();
    }
    rows_[{std::move(key), previous}] = std::move(row);
}

std::vector<double> ToyGenerator::next_token_log_probs(std::span<const int> prefix,
                                                       std::string_view conditioning) const {
    const int previous = prefix.empty() ? kStart : prefix.back();
    const auto key = condition_key(conditioning);
    if (auto it = rows_.find({key, previous}); it != rows_.end()) return it->second;
    if (auto it = rows_.find({std::string(), previous}); it != rows_.end()) return it->second;
    return std::vector<double>(vocab_.size(), -std::log(static_cast<double>(vocab_.size())));
}

ToyGenerator ToyGenerator::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open generator table " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
        ToyGenerator gen(doc.at("vocab").get<std::vector<std::string>>());
        for (const auto& row : doc.value("rows", nlohmann::json::array())) {
            int previous = kStart;
            if (!row.at("prev").is_null()) {
                const auto token = gen.find_token(row.at("prev").get<std::string>());
                if (!token) throw Error(ErrorCode::UnknownToken, "unknown prev token in generator table");
                previous = *token;
            }
            const auto probs = row.at("probs").get<std::vector<double>>();
            gen.set_row(row.value("key", std::string()), previous, probs);
        }
        return gen;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// HashBagEncoder

BackendCapabilities HashBagEncoder::capabilities() const {
    BackendCapabilities caps;
    caps.supports_embedding = true;
    return caps;
}

std::unique_ptr<Backend> HashBagEncoder::clone() const { return std::make_unique<HashBagEncoder>(*this); }

std::size_t HashBagEncoder::bucket(std::string_view token) const {
    return static_cast<std::size_t>(fnv1a(token) % dim_);
}

SentenceEmbedding HashBagEncoder::sentence_embedding(std::string_view text) const {
    const auto tokens = toy_word_split(text);
    if (tokens.empty()) throw Error(ErrorCode::EmptyInput, "cannot embed empty text");
    std::vector<double> v(dim_, 0.0);
    for (const auto& t : tokens) v[bucket(t)] += 1.0;
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return SentenceEmbedding{std::move(v)};
}

} // namespace clozefit
