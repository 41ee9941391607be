// SPDX-License-Identifier: Apache-2.0
/*
 * Drafting tests:
 *  - n-gram table construction and candidate ordering (hand tables)
 *  - table walks against the brute-force oracle
 *  - speculative stepping: accepted+1 law, pass accounting, and exact
 *    agreement with plain decoding over random inputs
 */
#include <catch2/catch_amalgamated.hpp>

#include "arag/drafting.hpp"
#include "oracles.hpp"

using namespace arag;

namespace {

TokenSeq toks(const std::string& text) { return tokenize(text, TokenizerMode::Whitespace); }

std::vector<std::int64_t> ids(const TokenSeq& t) { return oracles::ids_of(t); }

PromptSpan doc_span(const std::string& id, int slot, const std::string& text) {
    PromptSpan sp;
    sp.role = SpanRole::Document;
    sp.id = id;
    sp.position_slot = slot;
    sp.tokens = toks(text);
    return sp;
}

PromptSpan query_span(const std::string& text) {
    PromptSpan sp;
    sp.role = SpanRole::Query;
    sp.id = "@query";
    sp.position_slot = kQuerySlot;
    sp.tokens = toks(text);
    return sp;
}

}  // namespace

TEST_CASE("a bigram table counts followers and picks the most frequent", "[drafting]") {
    auto idx = NgramIndex::build({toks("a b a c a b")}, 2);
    CHECK(idx.order() == 2);
    CHECK(idx.context_count() == 3);  // contexts a, b, c
    CHECK(idx.next_after({token_id_of("a")}).value().surface == "b");  // b twice, c once
    CHECK(idx.next_after({token_id_of("b")}).value().surface == "a");
    CHECK(idx.next_after({token_id_of("c")}).value().surface == "a");
    CHECK_FALSE(idx.next_after({token_id_of("zz")}).has_value());
}

TEST_CASE("count outranks position; position breaks count ties", "[drafting]") {
    auto more_frequent = NgramIndex::build({toks("x a x b x b")}, 2);
    CHECK(more_frequent.next_after({token_id_of("x")}).value().surface == "b");

    auto tie = NgramIndex::build({toks("x a x b")}, 2);
    CHECK(tie.next_after({token_id_of("x")}).value().surface == "a");

    // Positions count across sources in build order.
    auto cross = NgramIndex::build({toks("m n"), toks("m p")}, 2);
    CHECK(cross.next_after({token_id_of("m")}).value().surface == "n");
}

TEST_CASE("a table walk chains greedy lookups", "[drafting]") {
    auto idx = NgramIndex::build({toks("the cat sat on the cat sat")}, 2);
    TokenSeq draft = idx.draft({token_id_of("on")}, 3);
    REQUIRE(draft.size() == 3);
    CHECK(draft[0].surface == "the");
    CHECK(draft[1].surface == "cat");
    CHECK(draft[2].surface == "sat");
}

TEST_CASE("walks stop at unseen contexts or the draft budget", "[drafting]") {
    auto idx = NgramIndex::build({toks("p q r")}, 3);
    CHECK(idx.draft({token_id_of("q"), token_id_of("r")}, 8).empty());  // "q r" has no follower
    auto d = idx.draft({token_id_of("p"), token_id_of("q")}, 8);
    REQUIRE(d.size() == 1);  // r, then "q r" is unseen
    CHECK(d[0].surface == "r");

    auto looped = NgramIndex::build({toks("a b a b a")}, 2);
    CHECK(looped.draft({token_id_of("a")}, 5).size() == 5);  // budget caps the loop

    CHECK(idx.draft({token_id_of("p")}, 8).empty());  // context shorter than order-1
}

TEST_CASE("order must leave room for a context", "[drafting]") {
    CHECK_THROWS_AS(NgramIndex::build({toks("a b")}, 1), Error);
}

TEST_CASE("table walks agree with the brute-force walk", "[drafting]") {
    DetRng rng(0xd4a37ULL);
    std::vector<std::string> vocab = {"t0", "t1", "t2", "t3", "t4"};
    for (int trial = 0; trial < 100; ++trial) {
        int nsrc = 2 + static_cast<int>(rng.below(3));
        std::vector<TokenSeq> sources;
        std::vector<std::vector<std::int64_t>> source_ids;
        for (int s = 0; s < nsrc; ++s) {
            TokenSeq src;
            int len = 5 + static_cast<int>(rng.below(11));
            for (int i = 0; i < len; ++i) src.push_back(make_token(vocab[rng.below(vocab.size())]));
            source_ids.push_back(ids(src));
            sources.push_back(std::move(src));
        }
        int order = 2 + static_cast<int>(rng.below(3));
        auto idx = NgramIndex::build(sources, order);

        std::vector<std::int64_t> recent;
        for (int i = 0; i < order - 1; ++i) {
            recent.push_back(token_id_of(vocab[rng.below(vocab.size())]));
        }
        auto got = idx.draft(recent, 8);
        auto want = oracles::ngram_walk(source_ids, static_cast<size_t>(order), recent, 8);
        CHECK(ids(got) == want);
    }
}

TEST_CASE("a speculative step emits exactly accepted plus one", "[drafting]") {
    ReferenceLm lm;
    CostCounters cost;
    PromptAssembly a;
    a.spans = {doc_span("d#0", 0, "the cat sat on the mat and the cat slept"),
               query_span("the cat sat on the")};
    auto res = lm.prefill(a, cost);
    // The copy continues "mat and the cat slept"; seed the drafter with the
    // same passage so its guesses track the verifier for a while.
    auto idx = NgramIndex::build({toks("the cat sat on the mat and the cat slept")}, 4);

    CHECK(res.first.token.surface == "mat");
    auto step = speculative_step(lm, res.ctx, idx, res.first.token, 8, cost);
    CHECK(step.speculative);
    CHECK(step.emitted.size() == static_cast<size_t>(std::count(step.verdicts.begin(),
                                                                step.verdicts.end(), true)) +
                                     1);
    CHECK(step.confidences.size() == step.emitted.size());
    CHECK(cost.decode_passes == 1);
    CHECK(step.emitted[0].surface == "and");
}

TEST_CASE("an empty draft falls back to one plain decode step", "[drafting]") {
    ReferenceLm lm;
    CostCounters cost;
    PromptAssembly a;
    a.spans = {doc_span("d#0", 0, "j k l m"), query_span("j k")};
    auto res = lm.prefill(a, cost);
    auto idx = NgramIndex::build({toks("unrelated words entirely")}, 4);

    auto step = speculative_step(lm, res.ctx, idx, res.first.token, 8, cost);
    CHECK_FALSE(step.speculative);
    CHECK(step.draft.empty());
    REQUIRE(step.emitted.size() == 1);
    CHECK(cost.decode_passes == 1);
}

TEST_CASE("speculative and plain decoding emit identical streams", "[drafting]") {
    DetRng rng(0x10551e55ULL);
    std::vector<std::string> vocab = {"u0", "u1", "u2", "u3", "u4", "u5"};
    for (int trial = 0; trial < 100; ++trial) {
        std::uint64_t seed = rng.next();
        int ndocs = 2 + static_cast<int>(rng.below(2));
        std::vector<std::string> texts;
        for (int d = 0; d < ndocs; ++d) {
            std::string text;
            int len = 6 + static_cast<int>(rng.below(10));
            for (int i = 0; i < len; ++i) {
                if (!text.empty()) text.push_back(' ');
                text += vocab[rng.below(vocab.size())];
            }
            texts.push_back(text);
        }
        std::string qtext = vocab[rng.below(vocab.size())];
        qtext += " " + vocab[rng.below(vocab.size())];

        auto build_assembly = [&]() {
            PromptAssembly a;
            for (int d = 0; d < ndocs; ++d) {
                a.spans.push_back(doc_span("d" + std::to_string(d) + "#0", d, texts[d]));
            }
            a.spans.push_back(query_span(qtext));
            return a;
        };

        ReferenceLm lm(LmParams{seed, 2, 4, 0.3, false});
        const int want_tokens = 24;

        // Plain arm.
        CostCounters plain_cost;
        auto plain = lm.prefill(build_assembly(), plain_cost);
        TokenSeq plain_stream{plain.first.token};
        std::vector<double> plain_conf{plain.first.confidence};
        while (plain_stream.size() < want_tokens) {
            auto out = lm.decode_step(plain.ctx, plain_stream.back(), plain_cost);
            plain_stream.push_back(out.token);
            plain_conf.push_back(out.confidence);
        }

        // Speculative arm.
        std::vector<TokenSeq> sources;
        for (const auto& t : texts) sources.push_back(toks(t));
        int order = 2 + static_cast<int>(rng.below(3));
        int max_draft = 1 + static_cast<int>(rng.below(8));
        auto idx = NgramIndex::build(sources, order);

        CostCounters spec_cost;
        auto spec = lm.prefill(build_assembly(), spec_cost);
        TokenSeq spec_stream{spec.first.token};
        std::vector<double> spec_conf{spec.first.confidence};
        while (spec_stream.size() < want_tokens) {
            auto step =
                speculative_step(lm, spec.ctx, idx, spec_stream.back(), max_draft, spec_cost);
            size_t acc = static_cast<size_t>(
                std::count(step.verdicts.begin(), step.verdicts.end(), true));
            REQUIRE(step.emitted.size() == acc + 1);
            for (size_t i = 0; i < step.emitted.size(); ++i) {
                spec_stream.push_back(step.emitted[i]);
                spec_conf.push_back(step.confidences[i]);
            }
        }

        // The speculative arm may overshoot by finishing a step; compare the
        // shared prefix, which is what a session would retain.
        spec_stream.resize(want_tokens);
        spec_conf.resize(want_tokens);
        CHECK(plain_stream == spec_stream);
        CHECK(plain_conf == spec_conf);
        CHECK(spec_cost.decode_passes <= plain_cost.decode_passes);
    }
}
