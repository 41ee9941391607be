// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arag/common.hpp"
#include "arag/token.hpp"

namespace arag {

enum class SpanRole { Instruction, Query, Document, Answer };

inline std::string span_role_name(SpanRole r) {
    switch (r) {
        case SpanRole::Instruction: return "instruction";
        case SpanRole::Query: return "query";
        case SpanRole::Document: return "document";
        case SpanRole::Answer: return "answer";
    }
    return "?";
}

// Reserved slot codes for spans that are never cached.
inline constexpr int kInstructionSlot = -1;
inline constexpr int kQuerySlot = -2;
inline constexpr int kPromptAnswerSlot = -3;
inline constexpr int kLiveAnswerSlot = -4;

// Symbolic stand-in for one key/value entry: the token it encodes, its
// within-span position, and a digest tying it to the span it was computed in.
struct KvState {
    std::int64_t token_id = 0;
    int position = 0;  // offset inside the owning span
    std::uint64_t digest = 0;

    bool operator==(const KvState& o) const {
        return token_id == o.token_id && position == o.position && digest == o.digest;
    }
};

// Content of a document span that earlier context "bled" into (recorded so a
// later reuse can surface exactly what the stale states still carry).
struct FoldedSpan {
    std::string doc_id;
    TokenSeq tokens;

    bool operator==(const FoldedSpan& o) const { return doc_id == o.doc_id && tokens == o.tokens; }
};

// One span's worth of symbolic KV entries.
//
// With bleed=false the segment is a pure function of (tokens, position_slot):
// chain_in is zero and reuse in any later assembly is exact. With bleed=true
// the digest folds the running context chain (chain_in) and `folded` records
// the document spans that preceded it at creation, tokens included; reuse
// under a different context is detectably stale and the folded docs leak into
// visibility as ghost spans unless an admitted-id set suppresses them.
struct KvSegment {
    std::string doc_id;  // passage id, or "@query" / "@instruction" / "@answer:<t>"
    SpanRole role = SpanRole::Document;
    int position_slot = 0;
    bool bleed = false;
    std::uint64_t chain_in = 0;
    std::uint64_t span_digest = 0;
    TokenSeq tokens;
    std::vector<KvState> states;
    std::vector<FoldedSpan> folded;

    bool operator==(const KvSegment& o) const {
        return doc_id == o.doc_id && role == o.role && position_slot == o.position_slot &&
               bleed == o.bleed && chain_in == o.chain_in && span_digest == o.span_digest &&
               tokens == o.tokens && states == o.states && folded == o.folded;
    }
};

inline std::uint64_t span_digest_of(bool bleed, std::uint64_t chain_in, int position_slot,
                                    const TokenSeq& tokens) {
    std::uint64_t h = kFnvOffset;
    if (bleed) h = fnv1a64_u64(chain_in, h);
    h = fnv1a64_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(position_slot)), h);
    for (const Token& t : tokens) {
        h = fnv1a64_u64(static_cast<std::uint64_t>(t.id), h);
    }
    return h;
}

inline KvState make_state(std::uint64_t span_digest, const Token& tok, int position) {
    return KvState{tok.id, position,
                   hash_combine(span_digest, static_cast<std::uint64_t>(position))};
}

// Builds a complete segment for a fresh span.
inline KvSegment make_segment(const std::string& doc_id, SpanRole role, int position_slot,
                              const TokenSeq& tokens, bool bleed, std::uint64_t chain_in,
                              std::vector<FoldedSpan> folded = {}) {
    KvSegment seg;
    seg.doc_id = doc_id;
    seg.role = role;
    seg.position_slot = position_slot;
    seg.bleed = bleed;
    seg.chain_in = bleed ? chain_in : 0;
    seg.span_digest = span_digest_of(bleed, seg.chain_in, position_slot, tokens);
    seg.tokens = tokens;
    seg.states.reserve(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        seg.states.push_back(make_state(seg.span_digest, tokens[i], static_cast<int>(i)));
    }
    if (bleed) seg.folded = std::move(folded);
    return seg;
}

// Structural validity: states align with tokens and the stored digests are
// reproducible from (bleed, chain_in, position_slot, tokens).
inline bool segment_consistent(const KvSegment& seg) {
    if (seg.states.size() != seg.tokens.size()) return false;
    std::uint64_t want = span_digest_of(seg.bleed, seg.chain_in, seg.position_slot, seg.tokens);
    if (seg.span_digest != want) return false;
    for (size_t i = 0; i < seg.states.size(); ++i) {
        if (seg.states[i].token_id != seg.tokens[i].id) return false;
        if (seg.states[i].position != static_cast<int>(i)) return false;
        if (seg.states[i].digest != hash_combine(want, static_cast<std::uint64_t>(i))) return false;
    }
    if (!seg.bleed && (!seg.folded.empty() || seg.chain_in != 0)) return false;
    return true;
}

}  // namespace arag
