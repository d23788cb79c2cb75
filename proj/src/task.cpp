#include "clozefit/task.hpp"

#include "clozefit/error.hpp"

#include <algorithm>

namespace clozefit {

int TaskSpec::class_of(const LabeledExample& example) const {
    if (!is_regression()) {
        const int id = example.class_id();
        if (id < 0 || static_cast<std::size_t>(id) >= labels.size()) {
            throw Error(ErrorCode::UnknownLabel, "class id " + std::to_string(id) + " not in task " + name);
        }
        return id;
    }
    const auto& spec = regression_spec();
    return example.value() > median ? spec.upper_class : spec.lower_class;
}

const RegressionSpec& TaskSpec::regression_spec() const {
    if (!regression) throw Error(ErrorCode::InvalidArgument, "task " + name + " has no regression interval");
    return *regression;
}

double label_median(const std::vector<LabeledExample>& examples) {
    if (examples.empty()) throw Error(ErrorCode::EmptyInput, "median of an empty dataset");
    std::vector<double> values;
    values.reserve(examples.size());
    for (const auto& ex : examples) values.push_back(ex.value());
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

} // namespace clozefit
