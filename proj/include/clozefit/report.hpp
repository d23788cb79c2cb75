#pragma once

#include "clozefit/eval_protocol.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clozefit {

/// One line of the results log: a grid trial ("trial") or the outcome of one
/// method on one seed ("seed"). Reports only read seed records.
struct ResultRecord {
    std::string kind = "seed";
    std::string task;
    std::string method;
    std::string metric; // metric_name()
    std::uint64_t seed = 0;
    std::optional<HyperParams> hyper;
    std::optional<std::size_t> best_step;
    std::optional<double> dev_metric;
    double test_metric = 0.0;
    std::optional<double> wall_time; // seconds
    std::string prompt;              // template and label words actually used
};

std::string to_json_line(const ResultRecord& record);
ResultRecord parse_json_line(std::string_view line);

/// Appends records in order, one JSON object per line.
void append_results(const std::filesystem::path& path, std::span<const ResultRecord> records);
std::vector<ResultRecord> read_results(const std::filesystem::path& path);

/// "mean (std)" with one decimal, halves rounded up. Inputs are already
/// scaled to percentages.
std::string format_cell(double mean, double stddev);

struct Report {
    std::string markdown;
    std::string csv;
};

/// Rows are methods and columns are tasks, both in first-appearance order.
/// Cells summarize test metrics over seeds, scaled by 100.
Report emit_report(std::span<const ResultRecord> records);

} // namespace clozefit
