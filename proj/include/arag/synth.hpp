#pragma once
// Workload builders for the simulator's test rigs.
//
// Each builder returns a SessionPlan: the corpus, a ready session config,
// and a closed-form script of what the engine must do with it (queries,
// retrieval ranks, answers, prompt token counts). The plans are worked out
// by hand, not by running the engine, so comparing a real run against a plan
// is an end-to-end check of retrieval, assembly, generation, and the
// requery policies at once. validate_plan() replays only the retrieval
// part against a real index; it exists to catch ranking drift early,
// especially after plans are merged into one corpus.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <arag/bm25.hpp>
#include <arag/common.hpp>
#include <arag/corpus.hpp>
#include <arag/lm.hpp>
#include <arag/session.hpp>
#include <arag/token.hpp>

namespace arag::synth {

struct SessionPlan {
    std::vector<std::pair<std::string, std::string>> docs;  // (doc id, text)
    SessionConfig config;                                    // toggles left to the caller
    std::vector<std::string> expected_queries;               // one per round
    std::vector<std::vector<std::string>> expected_hits;     // passage ids, rank order
    std::vector<std::vector<std::string>> expected_answers;  // retained surfaces
    std::string expected_stop;
    // Prompt accounting for the planned run. Valid for any toggle set that
    // keeps the guidance instruction off (the instruction adds prompt tokens
    // of its own). predicted_reused assumes the document cache is on.
    std::uint64_t predicted_prompt_total = 0;
    std::uint64_t predicted_reused = 0;
};

inline CorpusStore store_for(const std::vector<std::pair<std::string, std::string>>& docs,
                             std::size_t passage_size = 8192) {
    CorpusStore store(passage_size);
    for (const auto& [id, text] : docs) store.add_document(id, text);
    return store;
}

inline void validate_plan(const SessionPlan& plan, const Bm25Index& index) {
    for (std::size_t t = 0; t < plan.expected_queries.size(); ++t) {
        auto r = index.retrieve_text(plan.expected_queries[t],
                                     static_cast<std::size_t>(plan.config.n_docs));
        std::vector<std::string> got;
        for (const auto& h : r.hits) got.push_back(h.passage_id);
        if (got != plan.expected_hits[t]) {
            std::string msg = "plan '" + plan.config.session_id + "' round " +
                              std::to_string(t + 1) + " would retrieve [";
            for (const auto& id : got) msg += " " + id;
            msg += " ] instead of the planned ranking";
            throw Error(msg);
        }
    }
}

// ---------------------------------------------------------------------------
// Story relay: one fresh chapter per round, two anthologies reused forever.
//
// Round t retrieves [chapter_t, anth1, anth2]. The chapter carries a tf-3
// beacon block, junk padding, a two-token hook, and a body of round-unique
// words that runs to the end of the span. Generation enters the body through
// the hook, copies it verbatim, falls off the span end, and emits one hashed
// filler token. That low-confidence token trips the importance-weighted
// policy, whose query comes out as "<next beacon> <filler>": the beacon for
// round t+1 is planted mid-body with document frequency 4 (its own chapter's
// boost block, both anthologies, and the plant), while every ordinary body
// word appears in `dicts` extra dictionary documents and so loses the idf
// contest. The filler term only strengthens the chapter it was planted in.
//
// The hook of chapter t+1 is (last body word of round t, filler of round t);
// the filler surface is precomputed here by hashing the same way the
// generator does, which is what makes the plan exact. Chapters are kept
// longer than the anthologies so the previous chapter (which contains the
// current beacon as a plant) ranks below every anthology and drops out of
// the top n: every post-first round reuses exactly the `anths` anthologies,
// pinning per-round overlap and the cache hit ratio to anths/(anths+1).
// ---------------------------------------------------------------------------

struct StoryParams {
    int rounds = 101;
    int body = 24;  // body words per chapter, beacon plant included
    int pad = 91;   // junk padding; keeps chapters longer than anthologies
    int dicts = 8;  // dictionary docs lifting body-word df above beacon df
    int anths = 2;  // anthologies reused every round; n_docs = anths + 1
    std::string tag = "st";
    std::uint64_t lm_seed = 1;
};

inline SessionPlan story_plan(const StoryParams& sp, bool self_check = true) {
    const int T = sp.rounds;
    const int m = sp.body;
    if (T < 2) throw Error("story needs at least two rounds");
    if (m < 8) throw Error("story body must hold at least 8 words");
    if (sp.anths < 1 || sp.anths > 9) throw Error("story supports 1 to 9 anthologies");
    // Beacon df is 2 + anths (boost block, plant, one hit per anthology);
    // body words must stay strictly more common or the idf contest flips.
    if (sp.dicts < sp.anths + 2) throw Error("story needs at least anths + 2 dictionaries");
    // Chapter length m + pad + 5 must clear anthology length T + 2 by enough
    // that BM25's length normalization keeps the stale chapter out of the
    // top 3. Ten extra tokens is a comfortable margin at these sizes.
    if (m + sp.pad < T + 10) throw Error("story chapters too short: raise body or pad");

    auto beacon = [&](int t) { return sp.tag + "beac" + std::to_string(t); };
    auto word = [&](int t, int i) {
        return sp.tag + "w" + std::to_string(t) + "_" + std::to_string(i);
    };

    // Bodies first: fillers are hashes of the last four body token ids, so
    // they are fixed before any document text is assembled.
    std::vector<std::vector<std::string>> body(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
        auto& b = body[static_cast<std::size_t>(t - 1)];
        for (int i = 1; i <= m; ++i) b.push_back(word(t, i));
        if (t < T) b[static_cast<std::size_t>(m / 2)] = beacon(t + 1);
        else b.back() = kEndMarkerSurface;
    }
    std::vector<std::string> filler(static_cast<std::size_t>(T));  // [t-1], last round unused
    std::set<std::string> seen;
    for (int t = 1; t < T; ++t) {
        const auto& b = body[static_cast<std::size_t>(t - 1)];
        std::vector<std::int64_t> tail;
        for (std::size_t i = b.size() - 4; i < b.size(); ++i) tail.push_back(token_id_of(b[i]));
        auto f = fallback_token(sp.lm_seed, tail).surface;
        if (!seen.insert(f).second)
            throw Error("story filler surfaces collide; pick another lm_seed or tag");
        filler[static_cast<std::size_t>(t - 1)] = f;
    }

    SessionPlan plan;
    const std::string h0 = sp.tag + "h0", g0 = sp.tag + "g0";
    for (int t = 1; t <= T; ++t) {
        std::vector<std::string> toks;
        for (int i = 0; i < 3; ++i) toks.push_back(beacon(t));
        for (int i = 1; i <= sp.pad; ++i)
            toks.push_back(sp.tag + "pad" + std::to_string(t) + "_" + std::to_string(i));
        if (t == 1) {
            toks.push_back(h0);
            toks.push_back(g0);
        } else {
            toks.push_back(body[static_cast<std::size_t>(t - 2)].back());
            toks.push_back(filler[static_cast<std::size_t>(t - 2)]);
        }
        for (const auto& w : body[static_cast<std::size_t>(t - 1)]) toks.push_back(w);
        std::string text;
        for (const auto& w : toks) text += (text.empty() ? "" : " ") + w;
        plan.docs.emplace_back(sp.tag + "C" + std::to_string(t), text);
    }
    std::string beacons;
    for (int t = 1; t <= T; ++t) beacons += (t == 1 ? "" : " ") + beacon(t);
    for (int a = 1; a <= sp.anths; ++a) {
        // The last anthology carries the round-1 hook tail and is two tokens
        // longer, which also makes it the lowest-ranked document of round 1:
        // generation must continue from its tail straight into chapter 1.
        std::string text = (a == sp.anths) ? beacons + " " + h0 + " " + g0 : beacons;
        plan.docs.emplace_back(sp.tag + "TP" + std::to_string(a), text);
    }
    std::string dict;
    for (int t = 1; t <= T; ++t)
        for (int i = 1; i <= m; ++i) {
            const auto& w = body[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i - 1)];
            if (w == beacon(t + 1) || w == kEndMarkerSurface) continue;
            dict += (dict.empty() ? "" : " ") + w;
        }
    for (int j = 1; j <= sp.dicts; ++j)
        plan.docs.emplace_back(sp.tag + "dict" + std::to_string(j), dict);

    plan.config.session_id = sp.tag + "_story";
    plan.config.initial_query = beacon(1);
    plan.config.policy.kind = PolicyKind::ImportanceWeighted;
    plan.config.policy.threshold = 0.5;
    plan.config.policy.top_w = 2;
    plan.config.n_docs = sp.anths + 1;
    plan.config.t_max = T;
    plan.config.max_round_tokens = m + 8;
    plan.config.seed = sp.lm_seed;

    const std::uint64_t chap = static_cast<std::uint64_t>(m + sp.pad + 5);
    const std::uint64_t anth = static_cast<std::uint64_t>(sp.anths * T + 2);
    std::uint64_t prior = 0;
    for (int t = 1; t <= T; ++t) {
        std::vector<std::string> hits{sp.tag + "C" + std::to_string(t) + "#0"};
        for (int a = 1; a <= sp.anths; ++a) hits.push_back(sp.tag + "TP" + std::to_string(a) + "#0");
        plan.expected_hits.push_back(std::move(hits));
        std::vector<std::string> ans = body[static_cast<std::size_t>(t - 1)];
        if (t < T) {
            plan.expected_queries.push_back(
                t == 1 ? beacon(1)
                       : beacon(t) + " " + filler[static_cast<std::size_t>(t - 2)]);
            ans.push_back(filler[static_cast<std::size_t>(t - 1)]);
        } else {
            plan.expected_queries.push_back(beacon(T) + " " +
                                            filler[static_cast<std::size_t>(T - 2)]);
            ans.pop_back();  // the end marker is never retained
        }
        plan.expected_answers.push_back(ans);
        plan.predicted_prompt_total +=
            (t == 1 ? 1 : 2) + chap + anth + prior;
        if (t > 1) plan.predicted_reused += anth;
        prior += ans.size();
    }
    plan.expected_stop = "eos";

    if (self_check) {
        auto store = store_for(plan.docs);
        validate_plan(plan, Bm25Index::build(store));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Chain loop: a self-wrapping chain document whose tail bigram reopens its
// own head, so generation copies the chain forever and the fixed-interval
// window keeps re-issuing the same query. Round 1 retrieves [B, C, A] (two
// short decoys and the chain last), rounds 2..t_max retrieve [A, D, B]:
// two documents carry over from round 1, then the retrieval set freezes, so
// the cache serves 2 of 3 in round 2 and all 3 from round 3 on. Answers are
// pure chain copies, which also makes this the n-gram drafter's best case.
// ---------------------------------------------------------------------------

struct LoopParams {
    int chain = 10;  // >= 8 so the decoy terms x5 x6 stay inside the window
    int t_max = 3;
    std::string tag = "lp";
    std::uint64_t lm_seed = 0;
};

inline SessionPlan loop_plan(const LoopParams& lp, bool self_check = true) {
    const int N = lp.chain;
    if (N < 8) throw Error("loop chain must be at least 8 tokens");
    if (lp.t_max < 2) throw Error("loop needs at least two rounds");
    auto x = [&](int i) { return lp.tag + "x" + std::to_string(i); };

    SessionPlan plan;
    std::string chain;
    for (int i = 1; i <= N; ++i) chain += (i == 1 ? "" : " ") + x(i);
    chain += " " + x(1) + " " + x(2);
    plan.docs.emplace_back(lp.tag + "A", chain);
    // Decoys hold the round-1 query terms reversed: they must match the
    // query without containing the (x1, x2) bigram, or the copy would start
    // from a decoy instead of the chain.
    plan.docs.emplace_back(lp.tag + "B", x(2) + " " + x(1) + " " + lp.tag + "bb");
    plan.docs.emplace_back(lp.tag + "C", x(2) + " " + x(1) + " " + lp.tag + "cc");
    plan.docs.emplace_back(lp.tag + "D", x(5) + " " + x(6) + " " + lp.tag + "dd");

    plan.config.session_id = lp.tag + "_loop";
    plan.config.initial_query = x(1) + " " + x(2);
    plan.config.policy.kind = PolicyKind::FixedInterval;
    plan.config.policy.interval = N;
    plan.config.n_docs = 3;
    plan.config.t_max = lp.t_max;
    plan.config.max_round_tokens = N + 8;
    plan.config.seed = lp.lm_seed;

    std::vector<std::string> window;
    for (int i = 3; i <= N; ++i) window.push_back(x(i));
    window.push_back(x(1));
    window.push_back(x(2));
    std::string requery;
    for (const auto& w : window) requery += (requery.empty() ? "" : " ") + w;

    const std::uint64_t dlA = static_cast<std::uint64_t>(N + 2);
    std::uint64_t prior = 0;
    for (int t = 1; t <= lp.t_max; ++t) {
        if (t == 1) {
            plan.expected_queries.push_back(plan.config.initial_query);
            plan.expected_hits.push_back(
                {lp.tag + "B#0", lp.tag + "C#0", lp.tag + "A#0"});
            plan.predicted_prompt_total += 2 + 3 + 3 + dlA;
        } else {
            plan.expected_queries.push_back(requery);
            plan.expected_hits.push_back(
                {lp.tag + "A#0", lp.tag + "D#0", lp.tag + "B#0"});
            plan.predicted_prompt_total += static_cast<std::uint64_t>(N) + dlA + 3 + 3 + prior;
            plan.predicted_reused += (t == 2) ? dlA + 3 : dlA + 3 + 3;
        }
        plan.expected_answers.push_back(window);
        prior += window.size();
    }
    plan.expected_stop = "budget";

    if (self_check) {
        auto store = store_for(plan.docs);
        validate_plan(plan, Bm25Index::build(store));
    }
    return plan;
}

// The documentation walkthrough fixture: three rounds, partitions
// [3 fresh] / [2 cached, 1 fresh] / [3 cached].
inline SessionPlan fig_walkthrough_plan() { return loop_plan(LoopParams{10, 3, "fg", 0}); }

// ---------------------------------------------------------------------------
// Randomized families. No closed-form script: these exist for equivalence
// and determinism sweeps, where the baseline arm is the oracle.
// ---------------------------------------------------------------------------

struct RandomWorld {
    std::vector<std::pair<std::string, std::string>> docs;
    SessionConfig config;
};

inline std::vector<RandomWorld> random_family(int count, std::uint64_t seed) {
    std::vector<std::string> pool;
    for (int k = 0; k < 40; ++k)
        pool.push_back("fam" + std::to_string(k) + (k % 5 == 4 ? "." : ""));
    DetRng rng(seed);
    std::vector<RandomWorld> out;
    for (int i = 0; i < count; ++i) {
        RandomWorld w;
        auto vocab = pool;
        rng.shuffle(vocab);
        vocab.resize(12 + rng.below(6));
        const int ndocs = 4 + static_cast<int>(rng.below(4));
        std::vector<std::vector<std::string>> toks(static_cast<std::size_t>(ndocs));
        for (int d = 0; d < ndocs; ++d) {
            const std::size_t len = 8 + rng.below(12);
            std::string text;
            for (std::size_t j = 0; j < len; ++j) {
                const auto& t = vocab[rng.below(vocab.size())];
                toks[static_cast<std::size_t>(d)].push_back(t);
                text += (j == 0 ? "" : " ") + t;
            }
            w.docs.emplace_back("rd" + std::to_string(i) + "_" + std::to_string(d), text);
        }
        const auto& qd = toks[rng.below(toks.size())];
        const std::size_t qlen = 2 + rng.below(2);
        const std::size_t qat = rng.below(qd.size() - qlen);
        std::string query;
        for (std::size_t j = 0; j < qlen; ++j)
            query += (j == 0 ? "" : " ") + qd[qat + j];

        auto& cfg = w.config;
        cfg.session_id = "rnd" + std::to_string(i);
        cfg.initial_query = query;
        switch (i % 4) {
            case 0: cfg.policy.kind = PolicyKind::FixedInterval; break;
            case 1: cfg.policy.kind = PolicyKind::PerSentence; break;
            case 2: cfg.policy.kind = PolicyKind::ConfidenceThreshold; break;
            default: cfg.policy.kind = PolicyKind::ImportanceWeighted; break;
        }
        cfg.policy.interval = 4 + 2 * static_cast<int>(rng.below(4));
        cfg.policy.threshold = 0.5;
        cfg.policy.top_w = 2 + static_cast<int>(rng.below(2));
        cfg.n_docs = 2 + static_cast<int>(rng.below(2));
        cfg.t_max = 2 + static_cast<int>(rng.below(3));
        cfg.max_round_tokens = 16 + 4 * static_cast<int>(rng.below(4));
        cfg.cache_capacity = 8;
        cfg.ngram_order = 3 + static_cast<int>(rng.below(2));
        cfg.max_draft = 4 + 4 * static_cast<int>(rng.below(2));
        cfg.seed = rng.next();
        out.push_back(std::move(w));
    }
    return out;
}

// Context-bleed worlds. Member 0 is hand-built so that a reused document
// resurrects a folded neighbor whose text hijacks the copy: with guidance
// off the ghost supplies an earlier tie at the same match length and the
// round-2 answer comes out of the ghost; with guidance on (or with no cache
// at all) the ghost is suppressed and the answer comes out of the carrier.
inline std::vector<RandomWorld> staleness_family(int count, std::uint64_t seed) {
    std::vector<RandomWorld> out;
    {
        RandomWorld w;
        w.docs.emplace_back("ghG", "gate gate gate c1 c2 c3. gdiff.");
        w.docs.emplace_back("ghH", "gate c1 c2 c3. c1 c2");
        w.docs.emplace_back("ghK", "c3. k1 k2");
        auto& cfg = w.config;
        cfg.session_id = "ghost0";
        cfg.initial_query = "gate";
        cfg.policy.kind = PolicyKind::PerSentence;
        cfg.n_docs = 2;
        cfg.t_max = 2;
        cfg.max_round_tokens = 12;
        cfg.cache_capacity = 8;
        cfg.bleed = true;
        cfg.seed = 7;
        out.push_back(std::move(w));
    }
    auto rest = random_family(count > 1 ? count - 1 : 0, seed);
    for (auto& w : rest) {
        w.config.session_id = "gh" + w.config.session_id;
        w.config.bleed = true;
        w.config.n_docs = 2;  // narrower hits make carry-over likelier
        out.push_back(std::move(w));
    }
    return out;
}

// ---------------------------------------------------------------------------
// The bundled fixture workload: ten mini relays and ten chain loops over one
// merged corpus, each session keeping its own token namespace. Loops use
// longer chains here because the merged corpus raises the average document
// length, and the chain must stay the longest matching doc in round 1.
// ---------------------------------------------------------------------------

struct Bundle {
    std::vector<std::pair<std::string, std::string>> docs;
    std::vector<SessionPlan> sessions;
};

inline Bundle bundle_workload() {
    Bundle b;
    for (int i = 0; i < 10; ++i) {
        StoryParams sp;
        sp.rounds = 3 + (i % 2);
        sp.body = 12 + 2 * (i % 3);
        sp.pad = (sp.rounds + 10 > sp.body) ? sp.rounds + 10 - sp.body : 0;
        sp.dicts = 4;
        sp.tag = std::string("bs") + static_cast<char>('a' + i);
        sp.lm_seed = 100 + static_cast<std::uint64_t>(i);
        b.sessions.push_back(story_plan(sp, false));
    }
    for (int i = 0; i < 10; ++i) {
        LoopParams lp;
        lp.chain = 24 + 2 * i;
        lp.t_max = 3;
        lp.tag = std::string("bl") + static_cast<char>('a' + i);
        lp.lm_seed = 200 + static_cast<std::uint64_t>(i);
        b.sessions.push_back(loop_plan(lp, false));
    }
    for (const auto& plan : b.sessions)
        for (const auto& d : plan.docs) b.docs.push_back(d);
    auto store = store_for(b.docs);
    auto index = Bm25Index::build(store);
    for (const auto& plan : b.sessions) validate_plan(plan, index);
    return b;
}

}  // namespace arag::synth
