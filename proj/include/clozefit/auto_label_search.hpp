#pragma once

#include "clozefit/eval_protocol.hpp"
#include "clozefit/model_backend.hpp"
#include "clozefit/prompt_schema.hpp"
#include "clozefit/task.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clozefit {

/// Restrict each class's candidates to the `m` nearest neighbours of the
/// manual label word before enumerating assignments.
struct NeighborRerankSpec {
    std::size_t m = 30;
    std::vector<std::string> anchors; // manual label word per class
};

struct SearchConfig {
    std::size_t k = 100;
    std::size_t n = 100;
    HyperParams search_hyper{1e-5, 8};
    std::size_t max_steps = 1000;
    std::size_t eval_every = 100;
    std::optional<NeighborRerankSpec> rerank;
    std::size_t assignment_cap = 1'000'000;

    void validate() const;
};

/// k = 100 and n = 100, except SST-5 (k = 30) and TREC (k = 1000 narrowed to
/// 30 neighbours of the manual words).
SearchConfig default_search_config(std::string_view task_name);

struct VerbalizerCandidate {
    std::vector<int> tokens;        // one per class
    std::vector<std::string> words; // token texts
    double zero_shot_accuracy = 0.0;
    std::size_t correct = 0;        // zero-shot hits on D_train
    std::optional<double> dev_accuracy;

    Verbalizer verbalizer() const { return Verbalizer(words); }
};

/// The k tokens with the highest summed log-likelihood at the mask over the
/// class's examples; descending, ties by ascending token id. k is clamped to
/// the candidate vocabulary.
std::vector<int> prune_vocab(std::span<const LabeledExample> class_examples, const Template& pattern,
                             const Backend& backend, std::size_t k);

/// Top-n assignments from the product of the pruned sets (no word shared by
/// two classes), ranked by zero-shot accuracy on D_train, ties by
/// lexicographic token ids.
std::vector<VerbalizerCandidate> enumerate_assignments(const std::vector<std::vector<int>>& pruned,
                                                       std::span<const LabeledExample> train, const Template& pattern,
                                                       const TaskSpec& task, const Backend& backend, std::size_t n,
                                                       std::size_t assignment_cap = 1'000'000);

struct RerankResult {
    VerbalizerCandidate best;
    std::vector<VerbalizerCandidate> scored; // enumeration order, dev accuracy filled where training succeeded
};

/// Scores every candidate with `scorer` and returns the argmax, earlier
/// enumeration rank on ties. A single candidate is returned unscored.
RerankResult rerank_assignments(const std::vector<VerbalizerCandidate>& candidates, const Template& pattern,
                                const PromptScorer& scorer);

/// Same, fine-tuning each candidate from `initial` with the fixed search
/// hyper-parameters.
RerankResult rerank_assignments(const std::vector<VerbalizerCandidate>& candidates, const Template& pattern,
                                const FewShotSplit& split, const TaskSpec& task, const Backend& initial,
                                const SearchConfig& config, Metric metric);

/// The m words of `words` closest to `anchor` by embedding cosine; ties keep
/// input order.
std::vector<std::string> neighbor_rerank(std::span<const std::string> words, std::string_view anchor,
                                         const Backend& encoder, std::size_t m);

struct LabelSearchResult {
    std::vector<std::vector<int>> pruned;
    std::vector<VerbalizerCandidate> candidates; // top n by zero-shot accuracy
    VerbalizerCandidate best;
};

/// Prune, enumerate and re-rank on D_dev.
LabelSearchResult search_label_words(const FewShotSplit& split, const Template& pattern, const TaskSpec& task,
                                     const Backend& backend, const SearchConfig& config, Metric metric,
                                     const Backend* encoder = nullptr);

/// One candidate per line: `label:word,...<TAB>zero_shot<TAB>dev` (dev is "-"
/// when not re-ranked).
void write_candidate_file(const std::filesystem::path& path, const std::vector<VerbalizerCandidate>& candidates,
                          const TaskSpec& task);

} // namespace clozefit
