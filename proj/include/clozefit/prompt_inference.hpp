#pragma once

#include "clozefit/model_backend.hpp"
#include "clozefit/prompt_schema.hpp"
#include "clozefit/rng.hpp"

#include <span>
#include <vector>

namespace clozefit {

/// Floor applied to probabilities inside logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

struct ClassDistribution {
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
    /// Most probable class; ties go to the lower class id.
    int argmax() const;
};

/// Regression as interpolation between two pole label words.
struct RegressionSpec {
    double lower = 0.0; // v_l
    double upper = 1.0; // v_u
    int lower_class = 0; // y_l
    int upper_class = 1; // y_u

    void validate() const;
};

/// Task head of standard fine-tuning: rows x dim weights (one row for regression).
struct BaselineHead {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> weights;

    static BaselineHead random(std::size_t rows, std::size_t dim, Rng& rng, double scale = 0.02);
    std::size_t parameter_count() const noexcept { return weights.size(); }
};

/// Token ids of the verbalizer's label words, in class order.
std::vector<int> resolve_label_tokens(const Verbalizer& verbalizer, const Backend& backend);

/// Softmax restricted to the label-word logits.
ClassDistribution class_probabilities(const MaskLogits& logits, std::span<const int> label_tokens);
ClassDistribution class_probabilities(const MaskLogits& logits, const Verbalizer& verbalizer,
                                      const Backend& backend);

/// Log of the restricted softmax, computed stably.
std::vector<double> class_log_probabilities(const MaskLogits& logits, std::span<const int> label_tokens);

double classification_loss(const ClassDistribution& dist, int gold);

double regression_predict(double p_upper, const RegressionSpec& spec);
double regression_target(double y, const RegressionSpec& spec);
/// KL(Bernoulli(target) || Bernoulli(p_upper)).
double regression_loss(double p_upper, double target);

/// Probability of the upper pole from the two pole-word logits.
double upper_pole_probability(const MaskLogits& logits, int lower_token, int upper_token);

ClassDistribution baseline_head_forward(std::span<const double> cls, const BaselineHead& head);
double baseline_head_regression(std::span<const double> cls, const BaselineHead& head);

/// Cross-entropy of the restricted-softmax probabilities as a backend training loss.
MaskLoss classification_mask_loss(std::vector<int> label_tokens, int gold);
/// KL regression loss over the two pole logits as a backend training loss.
MaskLoss regression_mask_loss(int lower_token, int upper_token, double target);

} // namespace clozefit
