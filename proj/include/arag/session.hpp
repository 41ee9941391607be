// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "arag/bm25.hpp"
#include "arag/cache.hpp"
#include "arag/corpus.hpp"
#include "arag/drafting.hpp"
#include "arag/guidance.hpp"
#include "arag/lm.hpp"
#include "arag/policy.hpp"

namespace arag {

struct SessionToggles {
    bool cics = false;  // reuse document KV segments across rounds
    bool idgr = false;  // corrective instruction + ghost suppression (needs cics)
    bool igpg = false;  // n-gram drafting with single-pass verification
};

struct SessionConfig {
    std::string session_id = "s0";
    std::string initial_query;
    PolicyConfig policy;
    int n_docs = 3;
    int t_max = 5;              // retrieval rounds at most
    int max_round_tokens = 64;  // per-round safety stop when the policy never fires
    SessionToggles toggles;
    int ngram_order = 4;
    int max_draft = 8;
    bool bleed = false;  // document states absorb preceding context
    bool index_prior_answers = true;
    std::size_t cache_capacity = 64;
    int lm_min_match = 2;
    int lm_hash_window = 4;
    std::uint64_t seed = 0;
};

inline void validate(const SessionConfig& cfg) {
    if (cfg.session_id.empty()) throw Error("session_id must not be empty");
    if (cfg.initial_query.empty()) throw Error("initial_query must not be empty");
    if (cfg.n_docs < 1) throw Error("n_docs must be positive");
    if (cfg.t_max < 1) throw Error("t_max must be positive");
    if (cfg.max_round_tokens < 1) throw Error("max_round_tokens must be positive");
    if (cfg.ngram_order < 2) throw Error("ngram_order must be at least 2");
    if (cfg.max_draft < 1) throw Error("max_draft must be positive");
    if (cfg.toggles.idgr && !cfg.toggles.cics) {
        throw Error("idgr corrects cache reuse and needs cics enabled");
    }
}

struct DraftRecord {
    std::vector<std::string> draft;  // proposed surfaces
    std::vector<bool> verdicts;
    std::size_t emitted = 0;
    bool speculative = false;
};

struct RoundRecord {
    int round = 1;
    std::string query_text;
    std::vector<RetrievalHit> hits;
    std::optional<double> overlap_with_prev;  // |prev ∩ cur| / |cur|, rounds >= 2
    std::vector<std::string> cached_ids;      // served from the cache, rank order
    std::vector<std::string> fresh_ids;       // prefilled this round, rank order
    std::vector<std::string> evicted;
    std::vector<SpanAudit> audits;  // per document span, rank order
    std::string instruction;        // empty when idgr is off
    std::vector<std::string> unrelated_ids;
    TokenSeq answer;                  // retained tokens, end marker excluded
    std::vector<double> confidences;  // one per retained token
    std::vector<DraftRecord> draft_steps;
    CostCounters cost;  // this round's increments
    std::string stop;   // "policy" | "eos" | "token_budget"
};

struct GenerationTrace {
    std::string session_id;
    std::vector<RoundRecord> rounds;
    CostCounters total;
    std::string stop_reason;  // "eos" | "budget" | "token_budget"
    std::string answer_text;  // all retained tokens, in order
};

namespace detail {
inline CostCounters minus(const CostCounters& a, const CostCounters& b) {
    CostCounters d;
    d.prompt_tokens_computed = a.prompt_tokens_computed - b.prompt_tokens_computed;
    d.prompt_tokens_reused = a.prompt_tokens_reused - b.prompt_tokens_reused;
    d.decode_passes = a.decode_passes - b.decode_passes;
    d.answer_tokens = a.answer_tokens - b.answer_tokens;
    d.retrieval_calls = a.retrieval_calls - b.retrieval_calls;
    return d;
}
}  // namespace detail

// Runs one multi-round session against a corpus and its index.
//
// Round shape: retrieve -> partition docs against the cache -> assemble the
// prompt (instruction when idgr is on, query, documents by rank, prior
// answers) -> prefill -> generate until the policy fires, the end marker
// appears, or the round token budget runs out. Generated tokens are handled
// strictly one at a time, so a speculative run retains exactly the tokens a
// plain run would; whatever a verification step emitted past the stopping
// token is discarded with the round.
inline GenerationTrace run_session(const SessionConfig& cfg, const CorpusStore& store,
                                   const Bm25Index& index) {
    validate(cfg);
    if (index.doc_count() != store.passages().size()) {
        throw Error("index and corpus disagree on passage count");
    }
    const TokenizerMode mode = index.tokenizer_mode();

    ReferenceLm lm(LmParams{cfg.seed, cfg.lm_min_match, cfg.lm_hash_window, 0.3, cfg.bleed});
    CacheSpace cache(cfg.cache_capacity);
    SlotRegistry slots;
    QueryPolicy policy(cfg.policy, &index);

    GenerationTrace trace;
    trace.session_id = cfg.session_id;

    std::vector<TokenSeq> answers;  // A_1 .. A_{t-1}
    TokenSeq query = tokenize(cfg.initial_query, mode);
    std::vector<std::string> prev_ids;
    CostCounters total;

    for (int t = 1; t <= cfg.t_max; ++t) {
        RoundRecord rec;
        rec.round = t;
        CostCounters before = total;
        policy.begin_round();

        RetrievalResult got = index.retrieve(query, static_cast<std::size_t>(cfg.n_docs));
        total.retrieval_calls += 1;
        rec.query_text = detokenize(query, mode);
        rec.hits = got.hits;
        std::vector<std::string> ranked = got.ids();
        if (t > 1) rec.overlap_with_prev = overlap_ratio(prev_ids, ranked);
        prev_ids = ranked;

        FilterOutcome fo;
        if (cfg.toggles.cics) {
            fo = cache.filter(ranked);
        } else {
            for (const std::string& id : ranked) fo.entries.push_back(FilterEntry{id, nullptr});
            fo.misses = ranked.size();
        }
        std::vector<const KvSegment*> reused;
        for (const FilterEntry& e : fo.entries) {
            if (e.segment) {
                rec.cached_ids.push_back(e.doc_id);
                reused.push_back(e.segment);
            } else {
                rec.fresh_ids.push_back(e.doc_id);
            }
        }

        PromptAssembly assembly;
        if (cfg.toggles.idgr) {
            InstructionSpec inst = build_instruction(got, reused, mode);
            rec.instruction = inst.text;
            rec.unrelated_ids = inst.unrelated;
            assembly.admitted = inst.admitted;
            PromptSpan sp;
            sp.role = SpanRole::Instruction;
            sp.id = "@instruction";
            sp.position_slot = kInstructionSlot;
            sp.tokens = inst.tokens;
            assembly.spans.push_back(std::move(sp));
        }
        {
            PromptSpan sp;
            sp.role = SpanRole::Query;
            sp.id = "@query";
            sp.position_slot = kQuerySlot;
            sp.tokens = query;
            assembly.spans.push_back(std::move(sp));
        }
        for (const FilterEntry& e : fo.entries) {
            PromptSpan sp;
            sp.role = SpanRole::Document;
            sp.id = e.doc_id;
            sp.position_slot = slots.slot_for(e.doc_id);
            if (e.segment) {
                sp.cached = e.segment;
            } else {
                sp.tokens = store.get(e.doc_id).tokens;
            }
            assembly.spans.push_back(std::move(sp));
        }
        for (std::size_t i = 0; i < answers.size(); ++i) {
            PromptSpan sp;
            sp.role = SpanRole::Answer;
            sp.id = "@answer:" + std::to_string(i + 1);
            sp.position_slot = kPromptAnswerSlot;
            sp.tokens = answers[i];
            assembly.spans.push_back(std::move(sp));
        }

        PrefillResult pre = lm.prefill(assembly, total);
        rec.audits = pre.audits;
        if (cfg.toggles.cics) {
            for (KvSegment& seg : pre.fresh) {
                if (seg.role != SpanRole::Document) continue;
                for (std::string& ev : cache.store(std::move(seg))) {
                    rec.evicted.push_back(std::move(ev));
                }
            }
        }

        std::optional<NgramIndex> drafter;
        if (cfg.toggles.igpg) {
            std::vector<TokenSeq> sources;
            for (const std::string& id : ranked) sources.push_back(store.get(id).tokens);
            if (cfg.index_prior_answers) {
                for (const TokenSeq& a : answers) sources.push_back(a);
            }
            drafter = NgramIndex::build(sources, cfg.ngram_order);
        }

        // Generation. `process` consumes one emitted token and reports how to
        // go on; the first non-continue outcome ends the round and anything
        // emitted after it is dropped.
        enum class Act { Continue, Fired, Eos, TokenBudget };
        std::optional<TokenSeq> next_query;
        auto process = [&](const Token& tok, double conf) {
            if (tok.id == end_marker_id()) return Act::Eos;
            rec.answer.push_back(tok);
            rec.confidences.push_back(conf);
            total.answer_tokens += 1;
            if (auto fired = policy.on_token(tok, conf)) {
                next_query = std::move(*fired);
                return Act::Fired;
            }
            if (rec.answer.size() >= static_cast<std::size_t>(cfg.max_round_tokens)) {
                return Act::TokenBudget;
            }
            return Act::Continue;
        };

        Act act = process(pre.first.token, pre.first.confidence);
        Token pending = pre.first.token;
        while (act == Act::Continue) {
            if (drafter) {
                DraftStep step =
                    speculative_step(lm, pre.ctx, *drafter, pending, cfg.max_draft, total);
                DraftRecord dr;
                for (const Token& d : step.draft) dr.draft.push_back(d.surface);
                dr.verdicts = step.verdicts;
                dr.emitted = step.emitted.size();
                dr.speculative = step.speculative;
                rec.draft_steps.push_back(std::move(dr));
                for (std::size_t i = 0; i < step.emitted.size() && act == Act::Continue; ++i) {
                    act = process(step.emitted[i], step.confidences[i]);
                }
                pending = step.emitted.back();
            } else {
                LmOutput out = lm.decode_step(pre.ctx, pending, total);
                act = process(out.token, out.confidence);
                pending = out.token;
            }
        }

        rec.stop = act == Act::Fired ? "policy" : act == Act::Eos ? "eos" : "token_budget";
        answers.push_back(rec.answer);
        rec.cost = detail::minus(total, before);
        trace.rounds.push_back(std::move(rec));

        if (act == Act::Eos) {
            trace.stop_reason = "eos";
            break;
        }
        if (act == Act::TokenBudget) {
            trace.stop_reason = "token_budget";
            break;
        }
        // The policy fired. Starting another round needs budget left.
        if (t == cfg.t_max) {
            trace.stop_reason = "budget";
            break;
        }
        query = std::move(*next_query);
    }

    trace.total = total;
    TokenSeq all;
    for (const RoundRecord& r : trace.rounds) {
        all.insert(all.end(), r.answer.begin(), r.answer.end());
    }
    trace.answer_text = detokenize(all, mode);
    return trace;
}

}  // namespace arag
