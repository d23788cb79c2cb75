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

/// Span markers in generator inputs and outputs. The generator fills `<X>`,
/// emits `<Y>` between the two spans and stops with `<Z>`.
inline constexpr std::string_view kSpanX = "<X>";
inline constexpr std::string_view kSpanY = "<Y>";
inline constexpr std::string_view kSpanEnd = "<Z>";

enum class ConversionForm { before_single, after_single, between_pair };

std::string_view form_name(ConversionForm form);

/// Forms a task is searched with: the two single-sentence forms, or the
/// between-sentences form for pairs.
std::vector<ConversionForm> generation_forms(const TaskSpec& task);

struct GenerationInput {
    ConversionForm form = ConversionForm::after_single;
    std::string text;
};

/// e.g. after_single: "<S1> <X> great <Y>". Throws FormMismatch when the form
/// and the example's arity disagree.
GenerationInput build_generation_input(const LabeledExample& example, const Verbalizer& verbalizer,
                                       ConversionForm form, const TaskSpec& task);

std::vector<GenerationInput> build_generation_inputs(std::span<const LabeledExample> train,
                                                     const Verbalizer& verbalizer, ConversionForm form,
                                                     const TaskSpec& task);

/// Summed log-probability of `tokens` under the generator, over all inputs.
double template_log_prob(std::span<const int> tokens, std::span<const GenerationInput> inputs,
                         const Backend& generator);

struct DecodedCandidate {
    std::vector<int> tokens; // includes the `<Y>` separator and the end token
    double score = 0.0;
};

/// Beam search over a single output sequence maximizing the summed
/// log-probability across all inputs. `max_len` counts every token including
/// the separator and end token. Returns up to `beam_width` finished
/// sequences, best first (ties by lexicographic token ids).
std::vector<DecodedCandidate> beam_search_templates(std::span<const GenerationInput> inputs,
                                                    const Backend& generator, std::size_t beam_width,
                                                    std::size_t max_len);

struct DecodedSpans {
    std::string x;
    std::string y;
};

DecodedSpans decode_spans(std::span<const int> tokens, const Backend& generator);

/// Splices decoded spans around the sentence slots and the mask. Throws
/// DegenerateTemplate when both spans are empty or one contains a marker.
Template finalize_template(const DecodedSpans& spans, ConversionForm form);

struct TemplateCandidate {
    Template pattern;
    ConversionForm form = ConversionForm::after_single;
    double generation_score = 0.0;
    std::optional<double> dev_metric;
};

/// Beam search per form, finalized and deduplicated, best score first.
/// Degenerate decodes are dropped.
std::vector<TemplateCandidate> generate_template_candidates(std::span<const LabeledExample> train,
                                                            const Verbalizer& verbalizer, const TaskSpec& task,
                                                            const Backend& generator, std::size_t beam_width = 100,
                                                            std::size_t max_len = 20);

enum class SelectionMode { best_one, top_k_ensemble };

struct TemplateSelection {
    std::vector<TemplateCandidate> selected; // best dev metric first
    std::vector<TemplateCandidate> scored;   // input order, dev metric where training succeeded
};

/// Fine-tunes every candidate through `scorer` and keeps the best one or the
/// top k (earlier candidate on ties). A lone candidate is returned unscored.
TemplateSelection select_templates(const std::vector<TemplateCandidate>& candidates, const Verbalizer& verbalizer,
                                   SelectionMode mode, std::size_t k, const PromptScorer& scorer);

/// Rank, score and template per line.
void write_template_candidates(const std::filesystem::path& path, const std::vector<TemplateCandidate>& candidates);

} // namespace clozefit
