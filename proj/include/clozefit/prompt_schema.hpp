#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace clozefit {

/// Placeholder tokens of the template DSL. The mask marker doubles as the
/// abstract mask symbol handed to backends.
inline constexpr std::string_view kMaskMarker = "[MASK]";
inline constexpr std::string_view kSentence1Marker = "<S1>";
inline constexpr std::string_view kSentence2Marker = "<S2>";

struct Literal {
    std::string text;
    bool operator==(const Literal&) const = default;
};

struct SentenceSlot {
    int index = 1; // 1 or 2
    bool operator==(const SentenceSlot&) const = default;
};

struct MaskSlot {
    bool operator==(const MaskSlot&) const = default;
};

using TemplatePart = std::variant<Literal, SentenceSlot, MaskSlot>;

/// A cloze pattern: literals, sentence slots and exactly one mask.
///
/// Construction normalizes adjacent literals and drops empty ones, so every
/// valid template has a unique part list and `parse_template(t.serialize())`
/// reproduces it.
class Template {
public:
    static Template from_parts(std::vector<TemplatePart> parts);

    const std::vector<TemplatePart>& parts() const noexcept { return parts_; }
    std::string serialize() const;

    /// Highest sentence slot referenced (0, 1 or 2).
    int max_slot() const noexcept;
    bool references_slot(int index) const noexcept;

    bool operator==(const Template&) const = default;

private:
    explicit Template(std::vector<TemplatePart> parts) : parts_(std::move(parts)) {}

    std::vector<TemplatePart> parts_;
};

Template parse_template(std::string_view text);

/// Frozen, ordered label vocabulary of a task; class ids index into it.
class LabelSet {
public:
    LabelSet() = default;
    explicit LabelSet(std::vector<std::string> names);

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(int class_id) const;
    int index_of(std::string_view name) const;
    bool contains(std::string_view name) const;
    const std::vector<std::string>& names() const noexcept { return names_; }

    bool operator==(const LabelSet&) const = default;

private:
    std::vector<std::string> names_;
};

struct ClassId {
    int value = 0;
    auto operator<=>(const ClassId&) const = default;
};

using Label = std::variant<ClassId, double>;

struct LabeledExample {
    std::string id;
    std::string sentence1;
    std::optional<std::string> sentence2;
    Label label = ClassId{0};

    bool is_pair() const noexcept { return sentence2.has_value(); }
    bool is_regression() const noexcept { return std::holds_alternative<double>(label); }
    /// Class id of a classification example; throws UnknownLabel for regression.
    int class_id() const;
    /// Real-valued label of a regression example; throws UnknownLabel otherwise.
    double value() const;
};

/// Label words indexed by class id.
class Verbalizer {
public:
    Verbalizer() = default;
    explicit Verbalizer(std::vector<std::string> words);

    std::size_t size() const noexcept { return words_.size(); }
    const std::string& word(int class_id) const;
    const std::vector<std::string>& words() const noexcept { return words_; }

    bool operator==(const Verbalizer&) const = default;

private:
    std::vector<std::string> words_;
};

struct Prompt {
    Template pattern;
    Verbalizer verbalizer;
};

// ---------------------------------------------------------------------------
// Rendering

enum class ChunkKind { literal, sentence, mask, label_word };

/// One contiguous span of rendered text. `slot` is the sentence slot the
/// chunk belongs to (0 for template text before the first sentence).
struct RenderedChunk {
    std::string text;
    bool space_before = false;
    ChunkKind kind = ChunkKind::literal;
    int slot = 0;
};

struct RenderedText {
    std::vector<RenderedChunk> chunks;

    std::string str() const;
};

/// Renders with the mask marker (when `label_word` is empty) or the label word
/// in the mask position. Applies, in order of appearance:
///  - a space before every sentence that is not at the input start,
///  - lowercasing of a sentence's first ASCII letter when template text
///    precedes it,
///  - dropping a sentence's trailing punctuation character when the template
///    places punctuation right after it,
///  - a space before the mask / label word.
RenderedText render_chunks(const Template& pattern, const LabeledExample& example,
                           std::optional<std::string_view> label_word = std::nullopt);

std::string render(const Template& pattern, const LabeledExample& example);
std::string render_filled(const Template& pattern, const LabeledExample& example,
                          const Verbalizer& verbalizer);
/// Fills with the word of an explicit class, e.g. the median bin of a
/// regression example.
std::string render_filled(const Template& pattern, const LabeledExample& example,
                          const Verbalizer& verbalizer, int class_id);

// ---------------------------------------------------------------------------
// Prompt files: `template<TAB>label1:word1,label2:word2,...`

struct PromptSpec {
    Template pattern;
    std::vector<std::pair<std::string, std::string>> label_words;
};

PromptSpec parse_prompt_line(std::string_view line);
std::string format_prompt_line(const PromptSpec& spec);
std::vector<PromptSpec> read_prompt_file(const std::filesystem::path& path);

/// Orders the label words by class id; the label sets must match exactly.
Verbalizer bind_verbalizer(const std::vector<std::pair<std::string, std::string>>& label_words,
                           const LabelSet& labels);

} // namespace clozefit
