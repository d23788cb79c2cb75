#pragma once

#include "clozefit/prompt_inference.hpp"
#include "clozefit/prompt_schema.hpp"

#include <optional>
#include <string>
#include <vector>

namespace clozefit {

enum class TaskKind { classification, regression };

/// What a dataset asks for: input arity, label space, regression interval.
///
/// Regression tasks expose two pseudo-classes (lower/upper pole) split at the
/// dataset median; values equal to the median fall in the lower bin.
struct TaskSpec {
    std::string name;
    bool pair = false;
    TaskKind kind = TaskKind::classification;
    LabelSet labels;
    std::optional<RegressionSpec> regression;
    double median = 0.0;

    bool is_regression() const noexcept { return kind == TaskKind::regression; }
    std::size_t num_classes() const noexcept { return is_regression() ? 2 : labels.size(); }
    int class_of(const LabeledExample& example) const;
    /// Number of sentences per example (1 or 2).
    int sentences_per_example() const noexcept { return pair ? 2 : 1; }
    const RegressionSpec& regression_spec() const;
};

struct Dataset {
    TaskSpec task;
    std::vector<LabeledExample> examples;
};

/// Median of the regression labels (mean of the middle pair for even sizes).
double label_median(const std::vector<LabeledExample>& examples);

} // namespace clozefit
