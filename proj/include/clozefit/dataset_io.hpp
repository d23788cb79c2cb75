#pragma once

#include "clozefit/eval_protocol.hpp"
#include "clozefit/task.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace clozefit {

/// How to read a TSV: task name, whether it is a regression task (and its
/// interval), and optionally a fixed label order.
struct DatasetSchema {
    std::string task_name = "task";
    std::optional<std::pair<double, double>> interval; // set for regression
    std::vector<std::string> labels;                    // empty: inferred, sorted
};

/// Reads a TSV whose header names sentence1, optional sentence2, label and
/// optional id. Rows without an id get "<file stem>:<line>".
Dataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema);

/// Reads a second file (e.g. the test set) against an already frozen task:
/// labels must be known, and regression keeps the training median.
Dataset load_dataset(const std::filesystem::path& path, const TaskSpec& frozen);

/// Defaults for a known benchmark name: metric, arity and interval.
struct TaskPreset {
    std::string name;
    bool pair = false;
    Metric metric = Metric::accuracy;
    std::optional<std::pair<double, double>> interval;
    std::vector<std::string> labels; // class-id order when it matters (positive class last)
};

std::optional<TaskPreset> find_task_preset(std::string_view name);
const std::vector<TaskPreset>& task_presets();

} // namespace clozefit
