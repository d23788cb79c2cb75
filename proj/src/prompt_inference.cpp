#include "clozefit/prompt_inference.hpp"

#include "clozefit/error.hpp"

#include <algorithm>
#include <cmath>

namespace clozefit {

namespace {

double clamp_probability(double p) { return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor); }

double label_logit(const MaskLogits& logits, int token) {
    if (token < 0 || static_cast<std::size_t>(token) >= logits.size()) {
        throw Error(ErrorCode::UnknownToken, "label token " + std::to_string(token) + " outside the vocabulary");
    }
    return logits[static_cast<std::size_t>(token)];
}

} // namespace

int ClassDistribution::argmax() const {
    if (probs.empty()) throw Error(ErrorCode::EmptyInput, "empty class distribution");
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

void RegressionSpec::validate() const {
    if (!(lower < upper)) throw Error(ErrorCode::InvalidArgument, "regression interval must satisfy v_l < v_u");
    if (lower_class == upper_class) throw Error(ErrorCode::InvalidArgument, "regression poles must differ");
}

BaselineHead BaselineHead::random(std::size_t rows, std::size_t dim, Rng& rng, double scale) {
    BaselineHead head{rows, dim, std::vector<double>(rows * dim)};
    for (double& w : head.weights) w = rng.normal(0.0, scale);
    return head;
}

std::vector<int> resolve_label_tokens(const Verbalizer& verbalizer, const Backend& backend) {
    std::vector<int> tokens;
    tokens.reserve(verbalizer.size());
    for (const auto& word : verbalizer.words()) {
        const auto token = backend.word_token(word);
        if (!token) {
            throw Error(ErrorCode::UnknownToken, "label word '" + word + "' is not a single vocabulary token");
        }
        tokens.push_back(*token);
    }
    return tokens;
}

std::vector<double> class_log_probabilities(const MaskLogits& logits, std::span<const int> label_tokens) {
    std::vector<double> z;
    z.reserve(label_tokens.size());
    for (const int t : label_tokens) z.push_back(label_logit(logits, t));
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (const double x : z) sum += std::exp(x - top);
    const double log_norm = top + std::log(sum);
    for (double& x : z) x -= log_norm;
    return z;
}

ClassDistribution class_probabilities(const MaskLogits& logits, std::span<const int> label_tokens) {
    if (label_tokens.empty()) throw Error(ErrorCode::EmptyInput, "no label words");
    auto log_probs = class_log_probabilities(logits, label_tokens);
    for (double& x : log_probs) x = std::exp(x);
    return ClassDistribution{std::move(log_probs)};
}

ClassDistribution class_probabilities(const MaskLogits& logits, const Verbalizer& verbalizer,
                                      const Backend& backend) {
    const auto tokens = resolve_label_tokens(verbalizer, backend);
    return class_probabilities(logits, tokens);
}

double classification_loss(const ClassDistribution& dist, int gold) {
    if (gold < 0 || static_cast<std::size_t>(gold) >= dist.size()) {
        throw Error(ErrorCode::UnknownLabel, "gold class " + std::to_string(gold) + " not in the label set");
    }
    return -std::log(std::max(dist[static_cast<std::size_t>(gold)], kProbabilityFloor));
}

double regression_predict(double p_upper, const RegressionSpec& spec) {
    return spec.lower + p_upper * (spec.upper - spec.lower);
}

double regression_target(double y, const RegressionSpec& spec) {
    if (y < spec.lower || y > spec.upper) {
        throw Error(ErrorCode::OutOfInterval, "regression label " + std::to_string(y) + " outside [" +
                                                  std::to_string(spec.lower) + ", " + std::to_string(spec.upper) + "]");
    }
    return (y - spec.lower) / (spec.upper - spec.lower);
}

double regression_loss(double p_upper, double target) {
    const double p = clamp_probability(p_upper);
    double loss = 0.0;
    if (target > 0.0) loss += target * std::log(target / p);
    if (target < 1.0) loss += (1.0 - target) * std::log((1.0 - target) / (1.0 - p));
    return std::max(loss, 0.0);
}

double upper_pole_probability(const MaskLogits& logits, int lower_token, int upper_token) {
    const int tokens[2] = {lower_token, upper_token};
    return class_probabilities(logits, tokens)[1];
}

ClassDistribution baseline_head_forward(std::span<const double> cls, const BaselineHead& head) {
    if (cls.size() != head.dim || head.weights.size() != head.rows * head.dim) {
        throw Error(ErrorCode::ShapeError, "head expects dimension " + std::to_string(head.dim) + ", got " +
                                               std::to_string(cls.size()));
    }
    MaskLogits scores;
    std::vector<int> rows;
    for (std::size_t r = 0; r < head.rows; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < head.dim; ++j) acc += head.weights[r * head.dim + j] * cls[j];
        scores.values.push_back(acc);
        rows.push_back(static_cast<int>(r));
    }
    return class_probabilities(scores, rows);
}

double baseline_head_regression(std::span<const double> cls, const BaselineHead& head) {
    if (head.rows != 1 || cls.size() != head.dim || head.weights.size() != head.dim) {
        throw Error(ErrorCode::ShapeError, "regression head shape mismatch");
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < head.dim; ++j) acc += head.weights[j] * cls[j];
    return acc;
}

MaskLoss classification_mask_loss(std::vector<int> label_tokens, int gold) {
    return [tokens = std::move(label_tokens), gold](std::span<const double> logits, std::span<double> grad) {
        const MaskLogits view{std::vector<double>(logits.begin(), logits.end())};
        const auto dist = class_probabilities(view, tokens);
        for (std::size_t c = 0; c < tokens.size(); ++c) {
            grad[static_cast<std::size_t>(tokens[c])] += dist[c] - (static_cast<int>(c) == gold ? 1.0 : 0.0);
        }
        return classification_loss(dist, gold);
    };
}

MaskLoss regression_mask_loss(int lower_token, int upper_token, double target) {
    return [=](std::span<const double> logits, std::span<double> grad) {
        const double zl = logits[static_cast<std::size_t>(lower_token)];
        const double zu = logits[static_cast<std::size_t>(upper_token)];
        const double p = 1.0 / (1.0 + std::exp(zl - zu));
        grad[static_cast<std::size_t>(upper_token)] += p - target;
        grad[static_cast<std::size_t>(lower_token)] -= p - target;
        return regression_loss(p, target);
    };
}

} // namespace clozefit
