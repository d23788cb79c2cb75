#include "clozefit/auto_template_gen.hpp"

#include "clozefit/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace clozefit {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\n\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\n\r");
    return std::string(s.substr(b, e - b + 1));
}

bool has_marker(std::string_view s) {
    for (const auto m : {kMaskMarker, kSentence1Marker, kSentence2Marker, kSpanX, kSpanY, kSpanEnd}) {
        if (s.find(m) != std::string_view::npos) return true;
    }
    return false;
}

int find_generator_token(const Backend& generator, std::string_view text) {
    for (std::size_t i = 0; i < generator.generator_vocab_size(); ++i) {
        if (generator.generator_token_text(static_cast<int>(i)) == text) return static_cast<int>(i);
    }
    throw Error(ErrorCode::CapabilityError, "generator vocabulary lacks " + std::string(text));
}

struct Hypothesis {
    std::vector<int> tokens;
    double score = 0.0;
    bool has_separator = false;
};

bool better(const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
}

} // namespace

std::string_view form_name(ConversionForm form) {
    switch (form) {
    case ConversionForm::before_single: return "before_single";
    case ConversionForm::after_single: return "after_single";
    case ConversionForm::between_pair: return "between_pair";
    }
    return "?";
}

std::vector<ConversionForm> generation_forms(const TaskSpec& task) {
    if (task.pair) return {ConversionForm::between_pair};
    return {ConversionForm::before_single, ConversionForm::after_single};
}

GenerationInput build_generation_input(const LabeledExample& example, const Verbalizer& verbalizer,
                                       ConversionForm form, const TaskSpec& task) {
    const bool pair_form = form == ConversionForm::between_pair;
    if (pair_form != example.is_pair()) {
        throw Error(ErrorCode::FormMismatch, std::string(form_name(form)) + " does not fit example " + example.id);
    }
    const std::string& word = verbalizer.word(task.class_of(example));
    const std::string spans = std::string(kSpanX) + " " + word + " " + std::string(kSpanY);
    GenerationInput input;
    input.form = form;
    switch (form) {
    case ConversionForm::before_single: input.text = spans + " " + example.sentence1; break;
    case ConversionForm::after_single: input.text = example.sentence1 + " " + spans; break;
    case ConversionForm::between_pair: input.text = example.sentence1 + " " + spans + " " + *example.sentence2; break;
    }
    return input;
}

std::vector<GenerationInput> build_generation_inputs(std::span<const LabeledExample> train,
                                                     const Verbalizer& verbalizer, ConversionForm form,
                                                     const TaskSpec& task) {
    std::vector<GenerationInput> inputs;
    inputs.reserve(train.size());
    for (const auto& ex : train) inputs.push_back(build_generation_input(ex, verbalizer, form, task));
    return inputs;
}

double template_log_prob(std::span<const int> tokens, std::span<const GenerationInput> inputs,
                         const Backend& generator) {
    if (tokens.empty()) throw Error(ErrorCode::InvalidArgument, "empty template candidate");
    if (inputs.empty()) {
        spdlog::warn("EmptyTrainSet: template score over no examples is 0");
        return 0.0;
    }
    double total = 0.0;
    for (const auto& input : inputs) {
        for (std::size_t j = 0; j < tokens.size(); ++j) {
            const auto row = generator.next_token_log_probs(tokens.subspan(0, j), input.text);
            total += row.at(static_cast<std::size_t>(tokens[j]));
        }
    }
    return total;
}

std::vector<DecodedCandidate> beam_search_templates(std::span<const GenerationInput> inputs,
                                                    const Backend& generator, std::size_t beam_width,
                                                    std::size_t max_len) {
    if (beam_width == 0) throw Error(ErrorCode::InvalidArgument, "beam width must be positive");
    if (inputs.empty()) throw Error(ErrorCode::EmptyInput, "no generation inputs");
    const int sep = find_generator_token(generator, kSpanY);
    const int end = find_generator_token(generator, kSpanEnd);
    const std::size_t vocab = generator.generator_vocab_size();

    std::vector<Hypothesis> beam{Hypothesis{}};
    std::vector<Hypothesis> finished;
    for (std::size_t step = 0; step < max_len && !beam.empty(); ++step) {
        std::vector<Hypothesis> expanded;
        for (const auto& h : beam) {
            std::vector<double> summed(vocab, 0.0);
            for (const auto& input : inputs) {
                const auto row = generator.next_token_log_probs(h.tokens, input.text);
                for (std::size_t v = 0; v < vocab; ++v) summed[v] += row.at(v);
            }
            for (std::size_t v = 0; v < vocab; ++v) {
                const int tok = static_cast<int>(v);
                if (tok == sep && h.has_separator) continue;
                if (tok == end && !h.has_separator) continue;
                if (!std::isfinite(summed[v])) continue;
                Hypothesis next = h;
                next.tokens.push_back(tok);
                next.score += summed[v];
                next.has_separator = next.has_separator || tok == sep;
                expanded.push_back(std::move(next));
            }
        }
        std::sort(expanded.begin(), expanded.end(), better);
        if (expanded.size() > beam_width) expanded.resize(beam_width);
        beam.clear();
        for (auto& h : expanded) {
            if (h.tokens.back() == end) finished.push_back(std::move(h));
            else beam.push_back(std::move(h));
        }
    }
    std::sort(finished.begin(), finished.end(), better);
    if (finished.size() > beam_width) finished.resize(beam_width);
    std::vector<DecodedCandidate> out;
    for (auto& h : finished) out.push_back({std::move(h.tokens), h.score});
    return out;
}

DecodedSpans decode_spans(std::span<const int> tokens, const Backend& generator) {
    DecodedSpans spans;
    std::string* current = &spans.x;
    for (const int t : tokens) {
        const auto text = generator.generator_token_text(t);
        if (text == kSpanY) {
            current = &spans.y;
            continue;
        }
        if (text == kSpanEnd) break;
        if (!current->empty()) *current += ' ';
        *current += text;
    }
    return spans;
}

Template finalize_template(const DecodedSpans& spans, ConversionForm form) {
    const std::string x = trim(spans.x);
    const std::string y = trim(spans.y);
    if (x.empty() && y.empty()) throw Error(ErrorCode::DegenerateTemplate, "both spans are empty");
    if (has_marker(x) || has_marker(y)) throw Error(ErrorCode::DegenerateTemplate, "span contains a marker");

    std::vector<TemplatePart> parts;
    switch (form) {
    case ConversionForm::before_single:
        if (!x.empty()) parts.emplace_back(Literal{x + " "});
        parts.emplace_back(MaskSlot{});
        parts.emplace_back(Literal{y.empty() ? " " : " " + y + " "});
        parts.emplace_back(SentenceSlot{1});
        break;
    case ConversionForm::after_single:
        parts.emplace_back(SentenceSlot{1});
        parts.emplace_back(Literal{x.empty() ? " " : " " + x + " "});
        parts.emplace_back(MaskSlot{});
        if (!y.empty()) parts.emplace_back(Literal{" " + y});
        break;
    case ConversionForm::between_pair:
        parts.emplace_back(SentenceSlot{1});
        parts.emplace_back(Literal{x.empty() ? " " : " " + x + " "});
        parts.emplace_back(MaskSlot{});
        parts.emplace_back(Literal{y.empty() ? " " : " " + y + " "});
        parts.emplace_back(SentenceSlot{2});
        break;
    }
    return Template::from_parts(std::move(parts));
}

std::vector<TemplateCandidate> generate_template_candidates(std::span<const LabeledExample> train,
                                                            const Verbalizer& verbalizer, const TaskSpec& task,
                                                            const Backend& generator, std::size_t beam_width,
                                                            std::size_t max_len) {
    std::vector<TemplateCandidate> out;
    for (const auto form : generation_forms(task)) {
        const auto inputs = build_generation_inputs(train, verbalizer, form, task);
        for (const auto& decoded : beam_search_templates(inputs, generator, beam_width, max_len)) {
            try {
                auto pattern = finalize_template(decode_spans(decoded.tokens, generator), form);
                out.push_back({std::move(pattern), form, decoded.score, std::nullopt});
            } catch (const Error& e) {
                spdlog::debug("dropping decoded template: {}", e.what());
            }
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.generation_score > b.generation_score; });
    std::vector<TemplateCandidate> unique;
    for (auto& cand : out) {
        const bool seen = std::any_of(unique.begin(), unique.end(),
                                      [&](const auto& u) { return u.pattern == cand.pattern; });
        if (!seen) unique.push_back(std::move(cand));
    }
    return unique;
}

TemplateSelection select_templates(const std::vector<TemplateCandidate>& candidates, const Verbalizer& verbalizer,
                                   SelectionMode mode, std::size_t k, const PromptScorer& scorer) {
    if (candidates.empty()) throw Error(ErrorCode::NoUsableTemplate, "no template candidates");
    if (mode == SelectionMode::top_k_ensemble && k == 0) throw Error(ErrorCode::InvalidArgument, "k must be positive");
    TemplateSelection selection;
    selection.scored = candidates;
    if (candidates.size() == 1) {
        selection.selected = candidates;
        return selection;
    }
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < selection.scored.size(); ++i) {
        auto& cand = selection.scored[i];
        try {
            cand.dev_metric = scorer(Prompt{cand.pattern, verbalizer});
            ok.push_back(i);
        } catch (const std::exception& e) {
            spdlog::warn("template '{}' skipped: {}", cand.pattern.serialize(), e.what());
        }
    }
    if (ok.empty()) throw Error(ErrorCode::NoUsableTemplate, "fine-tuning failed for every template");
    std::stable_sort(ok.begin(), ok.end(), [&](std::size_t a, std::size_t b) {
        return *selection.scored[a].dev_metric > *selection.scored[b].dev_metric;
    });
    const std::size_t keep = mode == SelectionMode::best_one ? 1 : std::min(k, ok.size());
    for (std::size_t i = 0; i < keep; ++i) selection.selected.push_back(selection.scored[ok[i]]);
    return selection;
}

void write_template_candidates(const std::filesystem::path& path, const std::vector<TemplateCandidate>& candidates) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        out << i + 1 << '\t' << candidates[i].generation_score << '\t' << candidates[i].pattern.serialize() << '\n';
    }
}

} // namespace clozefit
