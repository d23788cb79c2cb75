#include "clozefit/auto_template_gen.hpp"
#include "clozefit/toy_backend.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace clozefit;
using testing::code_of;

namespace {

LabeledExample pair_example(std::string s1, std::string s2, int label) {
    auto ex = testing::example("p", std::move(s1), label);
    ex.sentence2 = std::move(s2);
    return ex;
}

// Generator with random rows keyed on the previous token (and optionally a
// label word); every row is strictly positive.
ToyGenerator random_generator(const std::vector<std::string>& vocab, const std::vector<std::string>& keys, Rng& rng) {
    ToyGenerator gen(vocab);
    for (const auto& key : keys) {
        for (int prev = ToyGenerator::kStart; prev < static_cast<int>(vocab.size()); ++prev) {
            std::vector<double> w(vocab.size());
            for (auto& x : w) x = 0.05 + rng.uniform01();
            gen.set_row(key, prev, w);
        }
    }
    return gen;
}

// Greedy decoding written out directly.
std::vector<int> greedy(std::span<const GenerationInput> inputs, const Backend& gen, int sep, int end, std::size_t max_len) {
    std::vector<int> seq;
    bool has_sep = false;
    while (seq.size() < max_len) {
        std::vector<double> summed(gen.generator_vocab_size(), 0.0);
        for (const auto& in : inputs) {
            const auto row = gen.next_token_log_probs(seq, in.text);
            for (std::size_t v = 0; v < row.size(); ++v) summed[v] += row[v];
        }
        int best = -1;
        for (int t = 0; t < static_cast<int>(summed.size()); ++t) {
            if ((t == sep && has_sep) || (t == end && !has_sep)) continue;
            if (best < 0 || summed[static_cast<std::size_t>(t)] > summed[static_cast<std::size_t>(best)]) best = t;
        }
        seq.push_back(best);
        has_sep = has_sep || best == sep;
        if (best == end) return seq;
    }
    return {};
}

} // namespace

TEST_CASE("generation inputs") {
    const auto single = testing::classification_task({"negative", "positive"});
    const auto pairs = testing::classification_task({"no", "yes"}, true);
    const Verbalizer v({"terrible", "great"});

    const auto ex = testing::example("e", "Great movie .", 1);
    CHECK(build_generation_input(ex, v, ConversionForm::after_single, single).text == "Great movie . <X> great <Y>");
    CHECK(build_generation_input(testing::example("e", "x", 0), v, ConversionForm::before_single, single).text ==
          "<X> terrible <Y> x");
    CHECK(build_generation_input(pair_example("s1", "s2", 1), v, ConversionForm::between_pair, pairs).text ==
          "s1 <X> great <Y> s2");
    CHECK(code_of([&] { build_generation_input(ex, v, ConversionForm::between_pair, single); }) ==
          ErrorCode::FormMismatch);

    CHECK(generation_forms(single) ==
          std::vector<ConversionForm>{ConversionForm::before_single, ConversionForm::after_single});
    CHECK(generation_forms(pairs) == std::vector<ConversionForm>{ConversionForm::between_pair});
}

TEST_CASE("template_log_prob") {
    ToyGenerator uniform({"<Y>", "<Z>", "a", "b"});
    const std::vector<GenerationInput> three{{ConversionForm::after_single, "x <X> great <Y>"},
                                             {ConversionForm::after_single, "y <X> great <Y>"},
                                             {ConversionForm::after_single, "z <X> terrible <Y>"}};
    const std::vector<int> two_tokens{2, 3};
    CHECK(template_log_prob(two_tokens, three, uniform) == doctest::Approx(6 * std::log(0.25)));
    CHECK(template_log_prob(two_tokens, {}, uniform) == 0.0);
    CHECK(code_of([&] { template_log_prob({}, three, uniform); }) == ErrorCode::InvalidArgument);

    Rng rng(12);
    const auto gen = random_generator({"<Y>", "<Z>", "a", "b", "c"}, {"", "great"}, rng);
    const std::vector<int> seq{2, 0, 4, 1};
    const double whole = template_log_prob(seq, three, gen);
    CHECK(whole == doctest::Approx(oracle::sequence_log_prob(seq, three, gen)).epsilon(1e-12));
    double parts = 0.0;
    for (const auto& in : three) parts += template_log_prob(seq, std::span(&in, 1), gen);
    CHECK(whole == doctest::Approx(parts).epsilon(1e-12));
    CHECK(whole <= 0.0);
}

TEST_CASE("beam search") {
    Rng rng(31);
    const std::vector<std::string> vocab{"<Y>", "<Z>", "it", "was"};
    const auto gen = random_generator(vocab, {"", "great", "terrible"}, rng);
    const std::vector<GenerationInput> inputs{{ConversionForm::after_single, "fun . <X> great <Y>"},
                                              {ConversionForm::after_single, "dull . <X> terrible <Y>"}};

    SUBCASE("exhaustive width finds every decode, best first") {
        const auto got = beam_search_templates(inputs, gen, 10000, 3);
        const auto all = oracle::all_decodes(inputs, gen, 0, 1, 3);
        REQUIRE(got.size() == all.size());
        CHECK(got.front().tokens == all.front().tokens);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].score == doctest::Approx(all[i].score).epsilon(1e-12));
            if (i > 0) CHECK(got[i].score <= got[i - 1].score);
        }
    }
    SUBCASE("width one is greedy") {
        const auto got = beam_search_templates(inputs, gen, 1, 6);
        const auto expected = greedy(inputs, gen, 0, 1, 6);
        if (expected.empty()) {
            CHECK(got.empty());
        } else {
            REQUIRE(got.size() == 1);
            CHECK(got.front().tokens == expected);
        }
    }
    SUBCASE("errors") {
        CHECK(code_of([&] { beam_search_templates(inputs, gen, 0, 3); }) == ErrorCode::InvalidArgument);
        CHECK(code_of([&] { beam_search_templates({}, gen, 2, 3); }) == ErrorCode::EmptyInput);
        ToyGenerator no_markers({"a", "b"});
        CHECK(code_of([&] { beam_search_templates(inputs, no_markers, 2, 3); }) == ErrorCode::CapabilityError);
    }
}

TEST_CASE("finalize_template") {
    CHECK(finalize_template({"It was", "."}, ConversionForm::after_single).serialize() == "<S1> It was [MASK] .");
    CHECK(finalize_template({"?", ","}, ConversionForm::between_pair).serialize() == "<S1> ? [MASK] , <S2>");
    CHECK(finalize_template({"", ":"}, ConversionForm::before_single).serialize() == "[MASK] : <S1>");
    CHECK(code_of([] { finalize_template({"", " "}, ConversionForm::after_single); }) ==
          ErrorCode::DegenerateTemplate);
    CHECK(code_of([] { finalize_template({"<S1>", "x"}, ConversionForm::after_single); }) ==
          ErrorCode::DegenerateTemplate);
    CHECK(code_of([] { finalize_template({"[MASK]", ""}, ConversionForm::after_single); }) ==
          ErrorCode::DegenerateTemplate);

    ToyGenerator gen({"<Y>", "<Z>", "It", "was", "."});
    const std::vector<int> toks{2, 3, 0, 4, 1};
    const auto spans = decode_spans(toks, gen);
    CHECK(spans.x == "It was");
    CHECK(spans.y == ".");
}

TEST_CASE("generate candidates from the bundled generator table") {
    const auto gen = ToyGenerator::from_json_file(std::string(CLOZEFIT_DATA) + "/generator/toy_table.json");
    const auto task = testing::classification_task({"negative", "positive"});
    const auto train = testing::sentiment_examples(4, 6);
    const auto cands = generate_template_candidates(train, Verbalizer({"terrible", "great"}), task, gen, 20, 8);
    REQUIRE_FALSE(cands.empty());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        CHECK(parse_template(cands[i].pattern.serialize()) == cands[i].pattern);
        if (i > 0) CHECK(cands[i].generation_score <= cands[i - 1].generation_score);
        for (std::size_t j = 0; j < i; ++j) CHECK_FALSE(cands[i].pattern == cands[j].pattern);
    }

    const auto path = std::filesystem::temp_directory_path() / "clozefit_templates.tsv";
    write_template_candidates(path, cands);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("1\t", 0) == 0);
    std::filesystem::remove(path);
}

TEST_CASE("select_templates") {
    const Verbalizer v({"terrible", "great"});
    std::vector<TemplateCandidate> cands;
    for (const auto* t : {"<S1> It was [MASK] .", "<S1> [MASK] !", "[MASK] : <S1>"}) {
        cands.push_back({parse_template(t), ConversionForm::after_single, -1.0, std::nullopt});
    }

    SUBCASE("lone candidate") {
        int calls = 0;
        const auto s = select_templates({cands[2]}, v, SelectionMode::best_one, 1,
                                        [&](const Prompt&) { return ++calls, 0.0; });
        CHECK(calls == 0);
        REQUIRE(s.selected.size() == 1);
        CHECK(s.selected[0].pattern == cands[2].pattern);
    }
    SUBCASE("best one and ties") {
        const auto s = select_templates(cands, v, SelectionMode::best_one, 1, [](const Prompt& p) {
            return p.pattern.serialize() == "<S1> It was [MASK] ." ? 0.5 : 0.9;
        });
        REQUIRE(s.selected.size() == 1);
        CHECK(s.selected[0].pattern == cands[1].pattern);
        CHECK(s.selected[0].dev_metric == 0.9);
    }
    SUBCASE("top k larger than the pool") {
        const auto s = select_templates(cands, v, SelectionMode::top_k_ensemble, 10, [](const Prompt& p) {
            return p.pattern.serialize() == "[MASK] : <S1>" ? 0.9 : 0.1;
        });
        REQUIRE(s.selected.size() == 3);
        CHECK(s.selected[0].pattern == cands[2].pattern);
        CHECK(s.selected[1].pattern == cands[0].pattern);
    }
    SUBCASE("every candidate fails") {
        CHECK(code_of([&] {
                  select_templates(cands, v, SelectionMode::best_one, 1,
                                   [](const Prompt&) -> double { throw Error(ErrorCode::TrainingDiverged, "x"); });
              }) == ErrorCode::NoUsableTemplate);
    }
}

TEST_CASE("fine-tune selection prefers the generating template") {
    // The distractor template carries strong negative cue words, which the
    // bag-of-words model reads as evidence for the negative class.
    ToyMaskedLm lm(testing::sentiment_vocab(), ToyMlmOptions{.seed = 13});
    const auto task = testing::classification_task({"negative", "positive"});
    const Verbalizer v({"terrible", "great"});
    const auto gold = parse_template("<S1> It was [MASK] .");
    const auto tokens = resolve_label_tokens(v, lm);
    std::vector<TrainItem> batch;
    for (const auto& ex : testing::sentiment_examples(20, 77, "pre")) {
        batch.push_back({render(gold, ex), {}, classification_mask_loss(tokens, ex.class_id())});
    }
    for (int step = 0; step < 200; ++step) lm.train_step(batch, 1e-5);

    FewShotSplit split;
    split.seed = 42;
    split.train = testing::sentiment_examples(8, 1, "tr");
    split.dev = testing::sentiment_examples(8, 2, "dv");
    TrainConfig config;
    config.hyper = {1e-8, 8};
    config.max_steps = 100;
    config.eval_every = 100;
    const auto scorer = make_fine_tune_scorer(lm, task, split, config, Metric::accuracy);

    std::vector<TemplateCandidate> cands{
        {parse_template("<S1> dull awful boring painful clumsy dull awful boring [MASK] ."), ConversionForm::after_single,
         0.0, std::nullopt},
        {gold, ConversionForm::after_single, 0.0, std::nullopt}};
    const auto s = select_templates(cands, v, SelectionMode::best_one, 1, scorer);
    REQUIRE(s.selected.size() == 1);
    CHECK(s.selected[0].pattern == gold);
}
