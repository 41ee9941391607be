// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "arag/common.hpp"
#include "arag/kv.hpp"
#include "arag/token.hpp"

namespace arag {

// Deterministic reference model. Greedy continuation is resolved by suffix
// copying: find the longest suffix of the visible content that also occurs
// earlier, and emit the token that followed that earlier occurrence. The
// earlier occurrence and its continuation must sit inside a single span; the
// suffix being matched may cross span boundaries. Ties between equally long
// occurrences go to the one that starts earliest. When no occurrence of
// length >= l_min exists the model emits a seeded hash of the trailing
// context_window token ids at reduced confidence.
struct LmParams {
    std::uint64_t seed = 0;
    int l_min = 2;
    int context_window = 4;
    double fallback_confidence = 0.3;
    bool bleed = false;
};

struct LmOutput {
    Token token;
    double confidence = 0.0;
};

// Abstract cost units, accumulated by the backend and the session loop.
struct CostCounters {
    std::uint64_t prompt_tokens_computed = 0;  // prompt tokens run through prefill
    std::uint64_t prompt_tokens_reused = 0;    // prompt tokens restored from cached segments
    std::uint64_t decode_passes = 0;           // forward passes spent generating
    std::uint64_t answer_tokens = 0;           // generated tokens retained in answers
    std::uint64_t retrieval_calls = 0;

    CostCounters& operator+=(const CostCounters& o) {
        prompt_tokens_computed += o.prompt_tokens_computed;
        prompt_tokens_reused += o.prompt_tokens_reused;
        decode_passes += o.decode_passes;
        answer_tokens += o.answer_tokens;
        retrieval_calls += o.retrieval_calls;
        return *this;
    }
};

struct PromptSpan {
    SpanRole role = SpanRole::Document;
    std::string id;  // passage id, or "@instruction" / "@query" / "@answer:<t>"
    int position_slot = 0;
    TokenSeq tokens;                    // fresh spans carry their tokens here
    const KvSegment* cached = nullptr;  // reused document spans carry a segment instead
};

// Spans in canonical order: instruction, query, documents by rank, prior
// answers. `admitted`, when present, limits which document ids are visible
// to the matcher; spans of non-admitted documents (and ghost spans folded
// into reused segments) are masked.
struct PromptAssembly {
    std::vector<PromptSpan> spans;
    std::optional<std::set<std::string>> admitted;
};

// Per-document-span record of what prefill actually did.
struct SpanAudit {
    std::string doc_id;
    int position_slot = 0;
    int rank = 0;  // 0-based position among this round's document spans
    bool reused = false;
    bool stale = false;                       // bleed only: stored chain_in != current chain
    std::vector<std::string> ghost_ids;       // folded docs this reuse made visible
    std::vector<std::string> suppressed_ids;  // folded docs hidden by the admitted set
};

inline Token fallback_token(std::uint64_t seed, const std::vector<std::int64_t>& tail) {
    std::uint64_t h = fnv1a64_u64(seed);
    for (std::int64_t id : tail) h = fnv1a64_u64(static_cast<std::uint64_t>(id), h);
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06llx", static_cast<unsigned long long>(h & 0xffffffull));
    std::string surface;
    surface.push_back(kFallbackPrefix);
    surface.append(buf, 6);
    return make_token(surface);
}

// Decode-time view of one prompt: the flattened visible content, a bigram
// position index over it, and the answer segment under construction. Spans
// are numbered in visibility order; the occurrence side of a match never
// crosses a span edge, which the index enforces at registration time.
class LmContext {
  public:
    struct FlatTok {
        Token tok;
        int span = 0;
    };

    std::size_t size() const { return flat_.size(); }
    const std::vector<FlatTok>& content() const { return flat_; }
    const KvSegment& answer_segment() const { return answer_; }

    std::vector<std::int64_t> tail_ids(std::size_t k) const {
        std::size_t n = flat_.size();
        std::size_t take = k < n ? k : n;
        std::vector<std::int64_t> out;
        out.reserve(take);
        for (std::size_t i = n - take; i < n; ++i) out.push_back(flat_[i].tok.id);
        return out;
    }

  private:
    friend class ReferenceLm;

    static std::uint64_t bigram_key(std::int64_t a, std::int64_t b) {
        return hash_combine(static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b));
    }

    int open_span() { return next_span_++; }

    void push_content(const Token& tok, int span) {
        flat_.push_back(FlatTok{tok, span});
        register_tail();
    }

    // Registers position q-1 as a candidate occurrence end once its
    // continuation q exists and [q-2, q] lies in one span.
    void register_tail() {
        std::size_t q = flat_.size() - 1;
        if (q < 2) return;
        if (flat_[q - 2].span != flat_[q].span || flat_[q - 1].span != flat_[q].span) return;
        bigrams_[bigram_key(flat_[q - 2].tok.id, flat_[q - 1].tok.id)].push_back(q - 1);
    }

    void begin_answer(std::uint64_t chain, bool bleed) {
        answer_ = make_segment("@answer", SpanRole::Answer, kLiveAnswerSlot, {}, bleed, chain);
        answer_span_ = open_span();
    }

    void append_answer(const Token& tok) {
        push_content(tok, answer_span_);
        int pos = static_cast<int>(answer_.tokens.size());
        answer_.tokens.push_back(tok);
        answer_.states.push_back(make_state(answer_.span_digest, tok, pos));
    }

    void pop_answer() {
        std::size_t q = flat_.size() - 1;
        if (q >= 2 && flat_[q - 2].span == flat_[q].span && flat_[q - 1].span == flat_[q].span) {
            bigrams_[bigram_key(flat_[q - 2].tok.id, flat_[q - 1].tok.id)].pop_back();
        }
        flat_.pop_back();
        answer_.tokens.pop_back();
        answer_.states.pop_back();
    }

    std::vector<FlatTok> flat_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> bigrams_;
    int next_span_ = 0;
    int answer_span_ = -1;
    KvSegment answer_;
};

struct PrefillResult {
    LmOutput first;                 // the round's first generated token (still pending)
    std::vector<KvSegment> fresh;   // one segment per fresh span, assembly order
    std::vector<SpanAudit> audits;  // one per document span, rank order
    LmContext ctx;
};

// Backend contract the orchestrator is written against.
class LmBackend {
  public:
    virtual ~LmBackend() = default;

    virtual PrefillResult prefill(const PromptAssembly& assembly, CostCounters& cost) const = 0;

    // Absorbs `last` into the context and scores the next token. One pass.
    virtual LmOutput decode_step(LmContext& ctx, const Token& last,
                                 CostCounters& cost) const = 0;

    // Scores the current context and every draft prefix in one pass:
    // out[j] is the greedy token after draft[0..j) has been appended, so a
    // draft of length M yields M+1 outputs. The context is left unchanged.
    virtual std::vector<LmOutput> verify_draft(LmContext& ctx, const TokenSeq& draft,
                                               CostCounters& cost) const = 0;

    // Appends already-verified tokens without spending a pass.
    virtual void absorb(LmContext& ctx, const TokenSeq& accepted) const = 0;
};

class ReferenceLm final : public LmBackend {
  public:
    explicit ReferenceLm(LmParams params = {}) : params_(params) {
        if (params_.l_min < 2) throw Error("l_min must be at least 2");
        if (params_.context_window < 1) throw Error("context_window must be positive");
    }

    const LmParams& params() const { return params_; }

    PrefillResult prefill(const PromptAssembly& assembly, CostCounters& cost) const override {
        std::set<std::string> doc_ids;
        for (const PromptSpan& sp : assembly.spans) {
            if (sp.role == SpanRole::Document) {
                if (!doc_ids.insert(sp.id).second) {
                    throw Error("duplicate document span \"" + sp.id + "\" in prompt");
                }
            } else if (sp.cached) {
                throw Error("only document spans can reuse cached states (span \"" + sp.id +
                            "\")");
            }
        }

        PrefillResult res;
        std::uint64_t chain = fnv1a64("ctx", params_.seed);
        std::set<std::string> materialized;
        std::vector<FoldedSpan> doc_content_so_far;
        int rank = 0;
        auto visible = [&](const std::string& id) {
            return !assembly.admitted || assembly.admitted->count(id) > 0;
        };
        auto push_span = [&](const TokenSeq& toks) {
            int span = res.ctx.open_span();
            for (const Token& t : toks) res.ctx.push_content(t, span);
        };

        for (const PromptSpan& sp : assembly.spans) {
            if (sp.cached) {
                const KvSegment& seg = *sp.cached;
                validate_cached(sp, seg, chain);
                SpanAudit audit;
                audit.doc_id = sp.id;
                audit.position_slot = seg.position_slot;
                audit.rank = rank++;
                audit.reused = true;
                audit.stale = params_.bleed && seg.chain_in != chain;
                for (const FoldedSpan& f : seg.folded) {
                    if (doc_ids.count(f.doc_id) || materialized.count(f.doc_id)) continue;
                    if (!visible(f.doc_id)) {
                        audit.suppressed_ids.push_back(f.doc_id);
                        continue;
                    }
                    materialized.insert(f.doc_id);
                    audit.ghost_ids.push_back(f.doc_id);
                    push_span(f.tokens);
                    doc_content_so_far.push_back(f);
                }
                cost.prompt_tokens_reused += seg.tokens.size();
                if (visible(sp.id)) push_span(seg.tokens);
                chain = hash_combine(chain, seg.span_digest);
                doc_content_so_far.push_back(FoldedSpan{sp.id, seg.tokens});
                res.audits.push_back(std::move(audit));
                continue;
            }

            // Fresh span. Only document spans fold prior document content.
            bool is_doc = sp.role == SpanRole::Document;
            KvSegment seg = make_segment(sp.id, sp.role, sp.position_slot, sp.tokens,
                                         params_.bleed, chain,
                                         is_doc ? doc_content_so_far
                                                : std::vector<FoldedSpan>{});
            cost.prompt_tokens_computed += sp.tokens.size();
            if (sp.role != SpanRole::Instruction && (!is_doc || visible(sp.id))) {
                push_span(sp.tokens);
            }
            chain = hash_combine(chain, seg.span_digest);
            if (is_doc) {
                SpanAudit audit;
                audit.doc_id = sp.id;
                audit.position_slot = sp.position_slot;
                audit.rank = rank++;
                res.audits.push_back(std::move(audit));
                doc_content_so_far.push_back(FoldedSpan{sp.id, sp.tokens});
            }
            res.fresh.push_back(std::move(seg));
        }

        res.ctx.begin_answer(chain, params_.bleed);
        res.first = greedy(res.ctx);
        return res;
    }

    LmOutput decode_step(LmContext& ctx, const Token& last, CostCounters& cost) const override {
        cost.decode_passes += 1;
        ctx.append_answer(last);
        return greedy(ctx);
    }

    std::vector<LmOutput> verify_draft(LmContext& ctx, const TokenSeq& draft,
                                       CostCounters& cost) const override {
        cost.decode_passes += 1;
        std::vector<LmOutput> outs;
        outs.reserve(draft.size() + 1);
        outs.push_back(greedy(ctx));
        for (const Token& t : draft) {
            ctx.append_answer(t);
            outs.push_back(greedy(ctx));
        }
        for (std::size_t i = 0; i < draft.size(); ++i) ctx.pop_answer();
        return outs;
    }

    void absorb(LmContext& ctx, const TokenSeq& accepted) const override {
        for (const Token& t : accepted) ctx.append_answer(t);
    }

  private:
    void validate_cached(const PromptSpan& sp, const KvSegment& seg, std::uint64_t) const {
        if (seg.role != SpanRole::Document || seg.doc_id != sp.id) {
            throw Error("cache-consistency: segment for \"" + seg.doc_id +
                        "\" attached to span \"" + sp.id + "\"");
        }
        if (seg.bleed != params_.bleed) {
            throw Error("cache-consistency: segment for \"" + sp.id +
                        "\" was built under a different bleed setting");
        }
        if (!segment_consistent(seg)) {
            throw Error("cache-consistency: segment for \"" + sp.id +
                        "\" fails digest validation");
        }
    }

    LmOutput greedy(const LmContext& ctx) const {
        const auto& s = ctx.flat_;
        std::size_t n = s.size();
        if (n == 0) throw Error("prompt has no visible content");
        if (n >= 2) {
            auto it = ctx.bigrams_.find(
                LmContext::bigram_key(s[n - 2].tok.id, s[n - 1].tok.id));
            std::size_t best_len = 0;
            std::size_t best_e = 0;
            if (it != ctx.bigrams_.end()) {
                for (std::size_t e : it->second) {
                    // Key lookup can alias; confirm the bigram really matches.
                    if (s[e].tok.id != s[n - 1].tok.id || s[e - 1].tok.id != s[n - 2].tok.id) {
                        continue;
                    }
                    int espan = s[e].span;
                    std::size_t len = 2;
                    while (e >= len && len + 1 <= n - 1) {
                        std::size_t occ = e - len;
                        std::size_t suf = n - 1 - len;
                        if (s[occ].span != espan) break;
                        if (s[occ].tok.id != s[suf].tok.id) break;
                        ++len;
                    }
                    if (len < static_cast<std::size_t>(params_.l_min)) continue;
                    // Candidates arrive in ascending position, so the first
                    // one reaching a given length starts earliest.
                    if (len > best_len) {
                        best_len = len;
                        best_e = e;
                    }
                }
            }
            if (best_len > 0) return LmOutput{s[best_e + 1].tok, 1.0};
        }
        auto tail = ctx.tail_ids(static_cast<std::size_t>(params_.context_window));
        return LmOutput{fallback_token(params_.seed, tail), params_.fallback_confidence};
    }

    LmParams params_;
};

}  // namespace arag
