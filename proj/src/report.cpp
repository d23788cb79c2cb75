#include "clozefit/report.hpp"

#include "clozefit/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace clozefit {

namespace {

using ordered_json = nlohmann::ordered_json;

template <typename T>
ordered_json opt(const std::optional<T>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::string one_decimal(double x) {
    const double rounded = std::floor(x * 10.0 + 0.5 + 1e-9) / 10.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", rounded == 0.0 ? 0.0 : rounded);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string to_json_line(const ResultRecord& r) {
    ordered_json j;
    j["kind"] = r.kind;
    j["task"] = r.task;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["learning_rate"] = r.hyper ? ordered_json(r.hyper->learning_rate) : ordered_json(nullptr);
    j["batch_size"] = r.hyper ? ordered_json(r.hyper->batch_size) : ordered_json(nullptr);
    j["best_step"] = opt(r.best_step);
    j["metric"] = r.metric;
    j["dev_metric"] = opt(r.dev_metric);
    j["test_metric"] = r.test_metric;
    j["wall_time"] = opt(r.wall_time);
    j["prompt"] = r.prompt;
    return j.dump();
}

ResultRecord parse_json_line(std::string_view line) {
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("bad result record: ") + e.what());
    }
    try {
        ResultRecord r;
        r.kind = j.value("kind", std::string("seed"));
        r.task = j.at("task").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        if (!j.value("learning_rate", ordered_json()).is_null()) {
            r.hyper = HyperParams{j.at("learning_rate").get<double>(), j.at("batch_size").get<std::size_t>()};
        }
        if (!j.value("best_step", ordered_json()).is_null()) r.best_step = j.at("best_step").get<std::size_t>();
        r.metric = j.value("metric", std::string("accuracy"));
        if (!j.value("dev_metric", ordered_json()).is_null()) r.dev_metric = j.at("dev_metric").get<double>();
        r.test_metric = j.at("test_metric").get<double>();
        if (!j.value("wall_time", ordered_json()).is_null()) r.wall_time = j.at("wall_time").get<double>();
        r.prompt = j.value("prompt", std::string());
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("bad result record: ") + e.what());
    }
}

void append_results(const std::filesystem::path& path, std::span<const ResultRecord> records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path.string());
    for (const auto& r : records) out << to_json_line(r) << '\n';
}

std::vector<ResultRecord> read_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<ResultRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_json_line(line));
    }
    return out;
}

std::string format_cell(double mean, double stddev) { return one_decimal(mean) + " (" + one_decimal(stddev) + ")"; }

Report emit_report(std::span<const ResultRecord> records) {
    std::vector<const ResultRecord*> seeds;
    for (const auto& r : records) {
        if (r.kind == "seed") seeds.push_back(&r);
    }
    if (seeds.empty()) throw Error(ErrorCode::EmptyResults, "no result records to report");

    std::vector<std::string> methods;
    std::vector<std::pair<std::string, std::string>> columns; // task, metric
    std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
    for (const auto* rp : seeds) {
        const auto& r = *rp;
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
        const auto col = std::pair{r.task, r.metric};
        if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
        cells[{r.method, r.task + '\x1f' + r.metric}].push_back(100.0 * r.test_metric);
    }

    std::vector<std::string> headers;
    for (const auto& [task, metric] : columns) {
        Metric m = Metric::accuracy;
        try {
            m = parse_metric(metric);
        } catch (const Error&) {
        }
        headers.push_back(task + " (" + std::string(metric_abbreviation(m)) + ")");
    }

    std::ostringstream md, csv;
    md << "| Method |";
    csv << "method";
    for (const auto& h : headers) {
        md << ' ' << h << " |";
        csv << ',' << csv_escape(h);
    }
    md << "\n|---|";
    for (std::size_t i = 0; i < headers.size(); ++i) md << "---|";
    md << '\n';
    csv << '\n';
    for (const auto& method : methods) {
        md << "| " << method << " |";
        csv << csv_escape(method);
        for (const auto& [task, metric] : columns) {
            std::string cell = "-";
            if (auto it = cells.find({method, task + '\x1f' + metric}); it != cells.end()) {
                const auto s = summarize(it->second);
                cell = format_cell(s.mean, s.stddev);
            }
            md << ' ' << cell << " |";
            csv << ',' << csv_escape(cell);
        }
        md << '\n';
        csv << '\n';
    }
    return {md.str(), csv.str()};
}

} // namespace clozefit
