// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "arag/bm25.hpp"
#include "arag/kv.hpp"
#include "arag/token.hpp"

namespace arag {

// Corrective instruction prepended when cached document states are reused.
// It names the documents that matter this round (the retrieved set, in rank
// order, with scores) and disavows the ones that only linger inside reused
// states. The rendered wording is part of the on-disk trace format; change it
// only with a schema bump.
struct InstructionSpec {
    std::vector<std::string> related;    // current round's doc ids, rank order
    std::vector<std::string> unrelated;  // folded-in leftovers, ascending id
    std::vector<std::pair<std::string, double>> relevance;  // rank order
    std::set<std::string> admitted;      // == related, as a lookup set
    std::string text;
    TokenSeq tokens;
};

namespace detail {
inline std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}
}  // namespace detail

inline std::string render_instruction(const std::vector<std::string>& related,
                                      const std::vector<std::string>& unrelated,
                                      const std::vector<std::pair<std::string, double>>& scores) {
    std::string out = "Docs";
    for (const auto& id : related) out += " " + id;
    out += " are related docs.";
    if (!unrelated.empty()) {
        out += " ";
        for (const auto& id : unrelated) {
            out += id + " ";
        }
        out += unrelated.size() == 1 ? "is unrelated." : "are unrelated.";
    }
    out += " The relevance scores are ";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (i) out += ", ";
        out += scores[i].first + ":" + detail::format_score(scores[i].second);
    }
    out += ".";
    return out;
}

inline InstructionSpec build_instruction(const RetrievalResult& retrieved,
                                         const std::vector<const KvSegment*>& reused_segments,
                                         TokenizerMode mode) {
    InstructionSpec spec;
    for (const RetrievalHit& h : retrieved.hits) {
        spec.related.push_back(h.passage_id);
        spec.relevance.emplace_back(h.passage_id, h.score);
        spec.admitted.insert(h.passage_id);
    }
    std::set<std::string> leftovers;
    for (const KvSegment* seg : reused_segments) {
        for (const FoldedSpan& f : seg->folded) {
            if (!spec.admitted.count(f.doc_id)) leftovers.insert(f.doc_id);
        }
    }
    spec.unrelated.assign(leftovers.begin(), leftovers.end());
    spec.text = render_instruction(spec.related, spec.unrelated, spec.relevance);
    spec.tokens = tokenize(spec.text, mode);
    return spec;
}

}  // namespace arag
