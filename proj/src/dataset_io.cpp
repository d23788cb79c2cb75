#include "clozefit/dataset_io.hpp"

#include "clozefit/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

namespace clozefit {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

struct Columns {
    int sentence1 = -1;
    int sentence2 = -1;
    int label = -1;
    int id = -1;
    std::size_t count = 0;
};

Columns read_header(const std::string& line, const std::filesystem::path& path) {
    Columns cols;
    const auto names = split_tabs(line);
    cols.count = names.size();
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto& n = names[i];
        int* slot = n == "sentence1" ? &cols.sentence1
                    : n == "sentence2" ? &cols.sentence2
                    : n == "label"     ? &cols.label
                    : n == "id"        ? &cols.id
                                       : nullptr;
        if (slot == nullptr) continue;
        if (*slot >= 0) throw Error(ErrorCode::ParseError, path.string() + ":1: duplicate column " + n);
        *slot = static_cast<int>(i);
    }
    if (cols.sentence1 < 0 || cols.label < 0) {
        throw Error(ErrorCode::ParseError, path.string() + ":1: header must name sentence1 and label");
    }
    return cols;
}

struct RawRow {
    std::size_t line = 0;
    std::string id, s1, label;
    std::optional<std::string> s2;
};

std::pair<Columns, std::vector<RawRow>> read_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": empty file, header missing");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto cols = read_header(line, path);

    std::vector<RawRow> rows;
    const auto stem = path.stem().string();
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != cols.count) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                                   std::to_string(cols.count) + " fields, found " +
                                                   std::to_string(fields.size()));
        }
        RawRow row;
        row.line = lineno;
        row.s1 = fields[static_cast<std::size_t>(cols.sentence1)];
        row.label = fields[static_cast<std::size_t>(cols.label)];
        if (cols.sentence2 >= 0) row.s2 = fields[static_cast<std::size_t>(cols.sentence2)];
        row.id = cols.id >= 0 ? fields[static_cast<std::size_t>(cols.id)] : stem + ":" + std::to_string(lineno);
        rows.push_back(std::move(row));
    }
    return {cols, std::move(rows)};
}

double parse_value(const RawRow& row, const std::filesystem::path& path) {
    double v = 0.0;
    const auto* begin = row.label.data();
    const auto* end = begin + row.label.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::ParseError,
                    path.string() + ":" + std::to_string(row.line) + ": '" + row.label + "' is not a number");
    }
    return v;
}

std::vector<LabeledExample> to_examples(const std::vector<RawRow>& rows, const TaskSpec& task,
                                        const std::filesystem::path& path) {
    std::vector<LabeledExample> out;
    out.reserve(rows.size());
    std::set<std::string> ids;
    for (const auto& row : rows) {
        if (task.pair != row.s2.has_value()) {
            throw Error(ErrorCode::ParseError, path.string() + ": sentence2 column does not match task " + task.name);
        }
        if (!ids.insert(row.id).second) {
            throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(row.line) + ": duplicate id " + row.id);
        }
        LabeledExample ex;
        ex.id = row.id;
        ex.sentence1 = row.s1;
        ex.sentence2 = row.s2;
        if (task.is_regression()) {
            const double v = parse_value(row, path);
            const auto& spec = task.regression_spec();
            if (v < spec.lower || v > spec.upper) {
                throw Error(ErrorCode::OutOfInterval, path.string() + ":" + std::to_string(row.line) + ": " +
                                                          row.label + " outside the regression interval");
            }
            ex.label = v;
        } else {
            ex.label = ClassId{task.labels.index_of(row.label)};
        }
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace

Dataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
    auto [cols, rows] = read_rows(path);
    TaskSpec task;
    task.name = schema.task_name;
    task.pair = cols.sentence2 >= 0;
    if (schema.interval) {
        task.kind = TaskKind::regression;
        RegressionSpec spec{schema.interval->first, schema.interval->second, 0, 1};
        spec.validate();
        task.regression = spec;
        task.labels = LabelSet({"y_l", "y_u"});
    } else if (!schema.labels.empty()) {
        task.labels = LabelSet(schema.labels);
    } else {
        std::set<std::string> seen;
        for (const auto& row : rows) seen.insert(row.label);
        task.labels = LabelSet(std::vector<std::string>(seen.begin(), seen.end()));
    }
    Dataset dataset{task, to_examples(rows, task, path)};
    if (dataset.examples.empty()) throw Error(ErrorCode::EmptyInput, path.string() + " has no examples");
    if (task.is_regression()) dataset.task.median = label_median(dataset.examples);
    return dataset;
}

Dataset load_dataset(const std::filesystem::path& path, const TaskSpec& frozen) {
    auto [cols, rows] = read_rows(path);
    (void)cols;
    return Dataset{frozen, to_examples(rows, frozen, path)};
}

const std::vector<TaskPreset>& task_presets() {
    static const std::vector<TaskPreset> presets{
        {"SST-2", false, Metric::accuracy, std::nullopt, {}},
        {"SST-5", false, Metric::accuracy, std::nullopt, {}},
        {"MR", false, Metric::accuracy, std::nullopt, {}},
        {"CR", false, Metric::accuracy, std::nullopt, {}},
        {"MPQA", false, Metric::accuracy, std::nullopt, {}},
        {"Subj", false, Metric::accuracy, std::nullopt, {}},
        {"TREC", false, Metric::accuracy, std::nullopt, {}},
        {"CoLA", false, Metric::matthews, std::nullopt, {"not_grammatical", "grammatical"}},
        {"MNLI", true, Metric::accuracy, std::nullopt, {}},
        {"SNLI", true, Metric::accuracy, std::nullopt, {}},
        {"QNLI", true, Metric::accuracy, std::nullopt, {}},
        {"RTE", true, Metric::accuracy, std::nullopt, {}},
        {"MRPC", true, Metric::f1, std::nullopt, {"not_equivalent", "equivalent"}},
        {"QQP", true, Metric::f1, std::nullopt, {"not_equivalent", "equivalent"}},
        {"STS-B", true, Metric::pearson, std::pair{0.0, 5.0}, {}},
    };
    return presets;
}

std::optional<TaskPreset> find_task_preset(std::string_view name) {
    for (const auto& p : task_presets()) {
        if (p.name == name) return p;
    }
    return std::nullopt;
}

} // namespace clozefit
