#include "clozefit/auto_label_search.hpp"

#include "clozefit/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

namespace clozefit {

namespace {

std::vector<double> log_softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (const double v : logits) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
    return out;
}

// Ranking order: more hits first, then smaller token tuple.
bool ranks_before(const VerbalizerCandidate& a, const VerbalizerCandidate& b) {
    if (a.correct != b.correct) return a.correct > b.correct;
    return a.tokens < b.tokens;
}

} // namespace

void SearchConfig::validate() const {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive");
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "n must be positive");
    if (assignment_cap == 0) throw Error(ErrorCode::InvalidArgument, "assignment cap must be positive");
    if (rerank && rerank->m == 0) throw Error(ErrorCode::InvalidArgument, "neighbour count must be positive");
}

SearchConfig default_search_config(std::string_view task_name) {
    SearchConfig config;
    if (task_name == "SST-5") config.k = 30;
    if (task_name == "TREC") {
        config.k = 1000;
        config.rerank = NeighborRerankSpec{};
    }
    return config;
}

std::vector<int> prune_vocab(std::span<const LabeledExample> class_examples, const Template& pattern,
                             const Backend& backend, std::size_t k) {
    if (class_examples.empty()) throw Error(ErrorCode::EmptyInput, "no examples to prune vocabulary with");
    const auto candidates = backend.label_word_candidates();
    if (k > candidates.size()) {
        spdlog::warn("prune_vocab: k={} exceeds the {} candidate tokens, clamping", k, candidates.size());
        k = candidates.size();
    }

    // Per token, the example contributions are summed in sorted order so the
    // total does not depend on example order.
    std::vector<std::vector<double>> per_token(candidates.size());
    for (const auto& ex : class_examples) {
        const auto lp = log_softmax(backend.mask_logits(render(pattern, ex)).values);
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            per_token[j].push_back(lp.at(static_cast<std::size_t>(candidates[j])));
        }
    }
    std::vector<std::pair<double, int>> scored;
    scored.reserve(candidates.size());
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        auto& col = per_token[j];
        std::sort(col.begin(), col.end());
        scored.emplace_back(std::accumulate(col.begin(), col.end(), 0.0), candidates[j]);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
    return out;
}

std::vector<VerbalizerCandidate> enumerate_assignments(const std::vector<std::vector<int>>& pruned_in,
                                                       std::span<const LabeledExample> train, const Template& pattern,
                                                       const TaskSpec& task, const Backend& backend, std::size_t n,
                                                       std::size_t assignment_cap) {
    if (pruned_in.size() != task.num_classes()) {
        throw Error(ErrorCode::ShapeError, "need one pruned set per class");
    }
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "n must be positive");
    auto pruned = pruned_in;
    for (const auto& set : pruned) {
        if (set.empty()) throw Error(ErrorCode::NoValidAssignment, "a class has no candidate words");
    }

    // Shrink the largest set until the product fits the cap.
    const auto product = [&] {
        double p = 1.0;
        for (const auto& set : pruned) p *= static_cast<double>(set.size());
        return p;
    };
    if (product() > static_cast<double>(assignment_cap)) {
        const double before = product();
        while (product() > static_cast<double>(assignment_cap)) {
            auto largest = std::max_element(pruned.begin(), pruned.end(),
                                            [](const auto& a, const auto& b) { return a.size() < b.size(); });
            if (largest->size() <= 1) break;
            largest->pop_back();
        }
        spdlog::warn("enumerate_assignments: {:.0f} assignments exceed the cap of {}, truncated to {:.0f}", before,
                     assignment_cap, product());
    }

    // Logits of every candidate token, cached per training example.
    std::set<int> needed;
    for (const auto& set : pruned) needed.insert(set.begin(), set.end());
    std::vector<int> golds;
    std::vector<std::vector<double>> cached; // [example][token]
    const int max_token = *needed.rbegin();
    for (const auto& ex : train) {
        const auto logits = backend.mask_logits(render(pattern, ex));
        std::vector<double> row(static_cast<std::size_t>(max_token) + 1, 0.0);
        for (const int t : needed) row[static_cast<std::size_t>(t)] = logits.values.at(static_cast<std::size_t>(t));
        cached.push_back(std::move(row));
        golds.push_back(task.class_of(ex));
    }

    const auto worse = [](const VerbalizerCandidate& a, const VerbalizerCandidate& b) { return ranks_before(a, b); };
    std::priority_queue<VerbalizerCandidate, std::vector<VerbalizerCandidate>, decltype(worse)> top(worse);

    const std::size_t classes = pruned.size();
    std::vector<std::size_t> idx(classes, 0);
    std::vector<int> tokens(classes);
    bool done = false;
    while (!done) {
        for (std::size_t c = 0; c < classes; ++c) tokens[c] = pruned[c][idx[c]];
        std::vector<int> sorted = tokens;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) {
            std::size_t correct = 0;
            for (std::size_t e = 0; e < cached.size(); ++e) {
                int best = 0;
                for (std::size_t c = 1; c < classes; ++c) {
                    if (cached[e][static_cast<std::size_t>(tokens[c])] >
                        cached[e][static_cast<std::size_t>(tokens[static_cast<std::size_t>(best)])]) {
                        best = static_cast<int>(c);
                    }
                }
                if (best == golds[e]) ++correct;
            }
            VerbalizerCandidate cand;
            cand.tokens = tokens;
            cand.correct = correct;
            if (top.size() < n) {
                top.push(std::move(cand));
            } else if (ranks_before(cand, top.top())) {
                top.pop();
                top.push(std::move(cand));
            }
        }
        // Odometer, last class fastest.
        std::size_t c = classes;
        while (true) {
            if (c == 0) {
                done = true;
                break;
            }
            --c;
            if (++idx[c] < pruned[c].size()) break;
            idx[c] = 0;
        }
    }
    if (top.empty()) throw Error(ErrorCode::NoValidAssignment, "every assignment reuses a word across classes");

    std::vector<VerbalizerCandidate> out;
    while (!top.empty()) {
        out.push_back(top.top());
        top.pop();
    }
    std::reverse(out.begin(), out.end());
    const double total = train.empty() ? 1.0 : static_cast<double>(train.size());
    for (auto& cand : out) {
        cand.zero_shot_accuracy = static_cast<double>(cand.correct) / total;
        for (const int t : cand.tokens) cand.words.push_back(backend.token_text(t));
    }
    return out;
}

RerankResult rerank_assignments(const std::vector<VerbalizerCandidate>& candidates, const Template& pattern,
                                const PromptScorer& scorer) {
    if (candidates.empty()) throw Error(ErrorCode::NoValidAssignment, "no candidates to re-rank");
    RerankResult result;
    result.scored = candidates;
    if (candidates.size() == 1) {
        result.best = candidates.front();
        return result;
    }
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < result.scored.size(); ++i) {
        auto& cand = result.scored[i];
        try {
            cand.dev_accuracy = scorer(Prompt{pattern, cand.verbalizer()});
        } catch (const std::exception& e) {
            spdlog::warn("label candidate {} skipped: {}", i, e.what());
            continue;
        }
        if (!best || *cand.dev_accuracy > *result.scored[*best].dev_accuracy) best = i;
    }
    if (!best) throw Error(ErrorCode::NoSuccessfulTrial, "fine-tuning failed for every label candidate");
    result.best = result.scored[*best];
    return result;
}

RerankResult rerank_assignments(const std::vector<VerbalizerCandidate>& candidates, const Template& pattern,
                                const FewShotSplit& split, const TaskSpec& task, const Backend& initial,
                                const SearchConfig& config, Metric metric) {
    TrainConfig train;
    train.hyper = config.search_hyper;
    train.max_steps = config.max_steps;
    train.eval_every = config.eval_every;
    train.seed = split.seed;
    return rerank_assignments(candidates, pattern, make_fine_tune_scorer(initial, task, split, train, metric));
}

std::vector<std::string> neighbor_rerank(std::span<const std::string> words, std::string_view anchor,
                                         const Backend& encoder, std::size_t m) {
    const auto anchor_emb = encoder.sentence_embedding(anchor);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < words.size(); ++i) {
        scored.emplace_back(cosine(anchor_emb, encoder.sentence_embedding(words[i])), i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(m, scored.size()); ++i) out.push_back(words[scored[i].second]);
    return out;
}

LabelSearchResult search_label_words(const FewShotSplit& split, const Template& pattern, const TaskSpec& task,
                                     const Backend& backend, const SearchConfig& config, Metric metric,
                                     const Backend* encoder) {
    config.validate();
    if (task.is_regression()) throw Error(ErrorCode::InvalidArgument, "label search needs a classification task");

    LabelSearchResult result;
    std::vector<std::vector<LabeledExample>> by_class(task.num_classes());
    for (const auto& ex : split.train) by_class[static_cast<std::size_t>(task.class_of(ex))].push_back(ex);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto pruned = prune_vocab(by_class[c], pattern, backend, config.k);
        if (config.rerank) {
            if (!encoder) throw Error(ErrorCode::CapabilityError, "neighbour re-ranking needs a sentence encoder");
            if (config.rerank->anchors.size() != task.num_classes()) {
                throw Error(ErrorCode::ShapeError, "need one anchor word per class");
            }
            std::vector<std::string> words;
            for (const int t : pruned) words.push_back(backend.token_text(t));
            pruned.clear();
            for (const auto& w : neighbor_rerank(words, config.rerank->anchors[c], *encoder, config.rerank->m)) {
                pruned.push_back(*backend.word_token(w));
            }
        }
        result.pruned.push_back(std::move(pruned));
    }
    result.candidates =
        enumerate_assignments(result.pruned, split.train, pattern, task, backend, config.n, config.assignment_cap);
    auto reranked = rerank_assignments(result.candidates, pattern, split, task, backend, config, metric);
    result.candidates = std::move(reranked.scored);
    result.best = std::move(reranked.best);
    return result;
}

void write_candidate_file(const std::filesystem::path& path, const std::vector<VerbalizerCandidate>& candidates,
                          const TaskSpec& task) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (const auto& cand : candidates) {
        for (std::size_t c = 0; c < cand.words.size(); ++c) {
            if (c) out << ',';
            out << task.labels.names().at(c) << ':' << cand.words[c];
        }
        out << '\t' << cand.zero_shot_accuracy << '\t';
        if (cand.dev_accuracy) out << *cand.dev_accuracy;
        else out << '-';
        out << '\n';
    }
}

} // namespace clozefit
