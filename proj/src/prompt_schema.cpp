#include "clozefit/prompt_schema.hpp"

#include "clozefit/error.hpp"

#include <algorithm>
#include <fstream>

namespace clozefit {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_punct(char c) {
    return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string_view rtrim(std::string_view s) {
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

bool contains_marker(std::string_view text) {
    return text.find(kMaskMarker) != std::string_view::npos ||
           text.find(kSentence1Marker) != std::string_view::npos ||
           text.find(kSentence2Marker) != std::string_view::npos;
}

Error malformed(const std::string& what) { return Error(ErrorCode::MalformedTemplate, what); }

} // namespace

Template Template::from_parts(std::vector<TemplatePart> parts) {
    std::vector<TemplatePart> normalized;
    normalized.reserve(parts.size());
    int masks = 0;
    bool seen[3] = {false, false, false};
    for (auto& part : parts) {
        if (auto* lit = std::get_if<Literal>(&part)) {
            if (lit->text.empty()) continue;
            if (contains_marker(lit->text)) {
                throw malformed("literal contains a placeholder marker: '" + lit->text + "'");
            }
            if (!normalized.empty()) {
                if (auto* prev = std::get_if<Literal>(&normalized.back())) {
                    prev->text += lit->text;
                    continue;
                }
            }
        } else if (auto* slot = std::get_if<SentenceSlot>(&part)) {
            if (slot->index != 1 && slot->index != 2) {
                throw malformed("sentence slot index must be 1 or 2");
            }
            if (seen[slot->index]) throw malformed("sentence slot referenced twice");
            seen[slot->index] = true;
        } else {
            ++masks;
        }
        normalized.push_back(std::move(part));
    }
    if (masks != 1) {
        throw malformed("template must contain exactly one " + std::string(kMaskMarker) +
                        ", found " + std::to_string(masks));
    }
    if (seen[2] && !seen[1]) throw malformed("<S2> used without <S1>");
    return Template(std::move(normalized));
}

std::string Template::serialize() const {
    std::string out;
    for (const auto& part : parts_) {
        if (const auto* lit = std::get_if<Literal>(&part)) {
            out += lit->text;
        } else if (const auto* slot = std::get_if<SentenceSlot>(&part)) {
            out += slot->index == 1 ? kSentence1Marker : kSentence2Marker;
        } else {
            out += kMaskMarker;
        }
    }
    return out;
}

int Template::max_slot() const noexcept {
    int best = 0;
    for (const auto& part : parts_) {
        if (const auto* slot = std::get_if<SentenceSlot>(&part)) best = std::max(best, slot->index);
    }
    return best;
}

bool Template::references_slot(int index) const noexcept {
    return std::any_of(parts_.begin(), parts_.end(), [index](const TemplatePart& p) {
        const auto* slot = std::get_if<SentenceSlot>(&p);
        return slot != nullptr && slot->index == index;
    });
}

Template parse_template(std::string_view text) {
    if (text.empty()) throw malformed("empty template");
    std::vector<TemplatePart> parts;
    std::string literal;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto rest = text.substr(pos);
        if (rest.starts_with(kMaskMarker)) {
            parts.emplace_back(Literal{std::exchange(literal, {})});
            parts.emplace_back(MaskSlot{});
            pos += kMaskMarker.size();
        } else if (rest.starts_with(kSentence1Marker)) {
            parts.emplace_back(Literal{std::exchange(literal, {})});
            parts.emplace_back(SentenceSlot{1});
            pos += kSentence1Marker.size();
        } else if (rest.starts_with(kSentence2Marker)) {
            parts.emplace_back(Literal{std::exchange(literal, {})});
            parts.emplace_back(SentenceSlot{2});
            pos += kSentence2Marker.size();
        } else {
            literal += text[pos++];
        }
    }
    parts.emplace_back(Literal{std::move(literal)});
    return Template::from_parts(std::move(parts));
}

// ---------------------------------------------------------------------------

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        for (std::size_t j = i + 1; j < names_.size(); ++j) {
            if (names_[i] == names_[j]) {
                throw Error(ErrorCode::InvalidArgument, "duplicate label '" + names_[i] + "'");
            }
        }
    }
}

const std::string& LabelSet::name(int class_id) const {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= names_.size()) {
        throw Error(ErrorCode::UnknownLabel, "class id " + std::to_string(class_id) + " out of range");
    }
    return names_[static_cast<std::size_t>(class_id)];
}

int LabelSet::index_of(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw Error(ErrorCode::UnknownLabel, "unknown label '" + std::string(name) + "'");
    return static_cast<int>(it - names_.begin());
}

bool LabelSet::contains(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

int LabeledExample::class_id() const {
    if (const auto* c = std::get_if<ClassId>(&label)) return c->value;
    throw Error(ErrorCode::UnknownLabel, "example '" + id + "' has a real-valued label");
}

double LabeledExample::value() const {
    if (const auto* v = std::get_if<double>(&label)) return *v;
    throw Error(ErrorCode::UnknownLabel, "example '" + id + "' has a class label");
}

Verbalizer::Verbalizer(std::vector<std::string> words) : words_(std::move(words)) {}

const std::string& Verbalizer::word(int class_id) const {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= words_.size()) {
        throw Error(ErrorCode::UnknownLabel,
                    "verbalizer has no word for class " + std::to_string(class_id));
    }
    return words_[static_cast<std::size_t>(class_id)];
}

// ---------------------------------------------------------------------------

std::string RenderedText::str() const {
    std::string out;
    for (const auto& chunk : chunks) {
        if (chunk.text.empty()) continue;
        if (chunk.space_before && !out.empty()) out += ' ';
        out += chunk.text;
    }
    return out;
}

RenderedText render_chunks(const Template& pattern, const LabeledExample& example,
                           std::optional<std::string_view> label_word) {
    const auto& parts = pattern.parts();
    RenderedText rendered;
    bool pending_space = false;
    bool template_text_before = false; // non-blank literal or mask seen since the last sentence
    int current_slot = 0;

    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& part = parts[i];
        if (const auto* lit = std::get_if<Literal>(&part)) {
            const std::string_view raw = lit->text;
            const auto body = trim(raw);
            if (body.empty()) {
                pending_space = true;
                continue;
            }
            rendered.chunks.push_back({std::string(body), pending_space || is_space(raw.front()),
                                       ChunkKind::literal, current_slot});
            pending_space = is_space(raw.back());
            template_text_before = true;
        } else if (std::holds_alternative<MaskSlot>(part)) {
            if (label_word) {
                rendered.chunks.push_back({std::string(*label_word), true, ChunkKind::label_word, current_slot});
            } else {
                rendered.chunks.push_back({std::string(kMaskMarker), true, ChunkKind::mask, current_slot});
            }
            pending_space = false;
            template_text_before = true;
        } else {
            const int index = std::get<SentenceSlot>(part).index;
            const std::optional<std::string>& source = index == 1
                ? std::optional<std::string>(example.sentence1)
                : example.sentence2;
            if (!source) {
                throw Error(ErrorCode::SlotUnfilled, "example '" + example.id + "' has no sentence " +
                                                         std::to_string(index));
            }
            std::string_view sentence = trim(*source);

            if (i + 1 < parts.size()) {
                if (const auto* next = std::get_if<Literal>(&parts[i + 1])) {
                    const auto next_body = trim(next->text);
                    if (!next_body.empty() && is_punct(next_body.front()) && !sentence.empty() &&
                        is_punct(sentence.back())) {
                        sentence.remove_suffix(1);
                        sentence = rtrim(sentence);
                    }
                }
            }

            std::string text(sentence);
            const bool at_start = rendered.str().empty();
            if (!at_start && template_text_before && !text.empty() && text[0] >= 'A' && text[0] <= 'Z') {
                text[0] = static_cast<char>(text[0] - 'A' + 'a');
            }
            current_slot = index;
            if (!text.empty()) {
                rendered.chunks.push_back({std::move(text), true, ChunkKind::sentence, index});
            }
            pending_space = false;
            template_text_before = false;
        }
    }

    // Template text ahead of the first sentence belongs to that sentence.
    int first_slot = 0;
    for (const auto& chunk : rendered.chunks) {
        if (chunk.kind == ChunkKind::sentence) {
            first_slot = chunk.slot;
            break;
        }
    }
    for (auto& chunk : rendered.chunks) {
        if (chunk.slot != 0) break;
        chunk.slot = first_slot;
    }
    return rendered;
}

std::string render(const Template& pattern, const LabeledExample& example) {
    return render_chunks(pattern, example).str();
}

std::string render_filled(const Template& pattern, const LabeledExample& example,
                          const Verbalizer& verbalizer) {
    return render_filled(pattern, example, verbalizer, example.class_id());
}

std::string render_filled(const Template& pattern, const LabeledExample& example,
                          const Verbalizer& verbalizer, int class_id) {
    return render_chunks(pattern, example, verbalizer.word(class_id)).str();
}

// ---------------------------------------------------------------------------

PromptSpec parse_prompt_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
        throw Error(ErrorCode::ParseError, "prompt line has no TAB separator");
    }
    PromptSpec spec{parse_template(line.substr(0, tab)), {}};
    std::string_view mapping = line.substr(tab + 1);
    while (!mapping.empty()) {
        const auto comma = mapping.find(',');
        const auto item = mapping.substr(0, comma);
        const auto colon = item.rfind(':');
        if (colon == std::string_view::npos || colon == 0 || colon + 1 == item.size()) {
            throw Error(ErrorCode::ParseError, "bad label mapping '" + std::string(item) + "'");
        }
        spec.label_words.emplace_back(std::string(item.substr(0, colon)), std::string(item.substr(colon + 1)));
        if (comma == std::string_view::npos) break;
        mapping.remove_prefix(comma + 1);
    }
    if (spec.label_words.empty()) throw Error(ErrorCode::ParseError, "prompt line has no label words");
    return spec;
}

std::string format_prompt_line(const PromptSpec& spec) {
    std::string out = spec.pattern.serialize();
    out += '\t';
    for (std::size_t i = 0; i < spec.label_words.size(); ++i) {
        if (i > 0) out += ',';
        out += spec.label_words[i].first;
        out += ':';
        out += spec.label_words[i].second;
    }
    return out;
}

std::vector<PromptSpec> read_prompt_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open prompt file " + path.string());
    std::vector<PromptSpec> prompts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line.front() == '#') continue;
        try {
            prompts.push_back(parse_prompt_line(line));
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return prompts;
}

Verbalizer bind_verbalizer(const std::vector<std::pair<std::string, std::string>>& label_words,
                           const LabelSet& labels) {
    std::vector<std::optional<std::string>> slots(labels.size());
    for (const auto& [label, word] : label_words) {
        const auto index = static_cast<std::size_t>(labels.index_of(label));
        if (slots[index]) throw Error(ErrorCode::InvalidArgument, "label '" + label + "' mapped twice");
        slots[index] = word;
    }
    std::vector<std::string> words;
    words.reserve(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) {
            throw Error(ErrorCode::UnknownLabel, "verbalizer has no word for label '" + labels.names()[i] + "'");
        }
        words.push_back(*slots[i]);
    }
    return Verbalizer(std::move(words));
}

} // namespace clozefit
