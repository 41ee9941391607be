// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "arag/bm25.hpp"
#include "arag/common.hpp"
#include "arag/token.hpp"

namespace arag {

// When to go back to retrieval mid-generation, and with what query.
enum class PolicyKind {
    FixedInterval,        // every `interval` generated tokens; query = that window
    PerSentence,          // at each sentence boundary; query = the sentence
    ConfidenceThreshold,  // when token confidence dips below `threshold`;
                          // query = the sentence so far
    ImportanceWeighted,   // same trigger; query = the `top_w` rarest sentence
                          // tokens by corpus idf
};

inline std::string policy_kind_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::FixedInterval: return "fixed-interval";
        case PolicyKind::PerSentence: return "per-sentence";
        case PolicyKind::ConfidenceThreshold: return "confidence-threshold";
        case PolicyKind::ImportanceWeighted: return "importance-weighted";
    }
    return "?";
}

inline PolicyKind policy_kind_from(const std::string& name) {
    if (name == "fixed-interval") return PolicyKind::FixedInterval;
    if (name == "per-sentence") return PolicyKind::PerSentence;
    if (name == "confidence-threshold") return PolicyKind::ConfidenceThreshold;
    if (name == "importance-weighted") return PolicyKind::ImportanceWeighted;
    throw Error("unknown policy kind \"" + name + "\"");
}

struct PolicyConfig {
    PolicyKind kind = PolicyKind::FixedInterval;
    int interval = 16;
    double threshold = 0.5;
    int top_w = 4;
};

inline bool ends_sentence(const std::string& surface) {
    if (surface.empty()) return false;
    char c = surface.back();
    return c == '.' || c == '!' || c == '?';
}

// Feeds on retained answer tokens one at a time and decides when the session
// should retrieve again. The token count is cumulative over the session (a
// round that stops early does not reset the interval phase); sentence state
// resets per round because each round starts a new answer.
class QueryPolicy {
  public:
    QueryPolicy(const PolicyConfig& cfg, const Bm25Index* index) : cfg_(cfg), index_(index) {
        if (cfg_.interval < 1) throw Error("policy interval must be positive");
        if (cfg_.threshold < 0.0 || cfg_.threshold > 1.0) {
            throw Error("policy threshold must lie in [0, 1]");
        }
        if (cfg_.top_w < 1) throw Error("policy top_w must be positive");
        if (cfg_.kind == PolicyKind::ImportanceWeighted && index_ == nullptr) {
            throw Error("the importance-weighted policy needs a retrieval index for idf");
        }
    }

    void begin_round() { sentence_.clear(); }

    // Returns the follow-up query when the policy fires on this token.
    std::optional<TokenSeq> on_token(const Token& tok, double confidence) {
        generated_ += 1;
        window_.push_back(tok);
        if (window_.size() > static_cast<std::size_t>(cfg_.interval)) window_.pop_front();
        sentence_.push_back(tok);
        bool boundary = ends_sentence(tok.surface);

        std::optional<TokenSeq> fire;
        switch (cfg_.kind) {
            case PolicyKind::FixedInterval:
                if (generated_ % static_cast<std::uint64_t>(cfg_.interval) == 0) {
                    fire = TokenSeq(window_.begin(), window_.end());
                }
                break;
            case PolicyKind::PerSentence:
                if (boundary) fire = sentence_;
                break;
            case PolicyKind::ConfidenceThreshold:
                if (confidence < cfg_.threshold) fire = sentence_;
                break;
            case PolicyKind::ImportanceWeighted:
                if (confidence < cfg_.threshold) {
                    TokenSeq picked = select_important(sentence_);
                    // Nothing the corpus has ever seen: no usable query.
                    if (!picked.empty()) fire = std::move(picked);
                }
                break;
        }
        if (boundary) sentence_.clear();
        return fire;
    }

    std::uint64_t generated() const { return generated_; }

  private:
    // The top_w sentence tokens by idf, rarest first; equally rare tokens
    // keep text order, and the final query is re-ordered as in the text.
    // Tokens absent from the corpus (df == 0) never qualify.
    TokenSeq select_important(const TokenSeq& sentence) const {
        struct Scored {
            std::size_t pos;
            const Token* tok;
            double idf;
        };
        std::vector<Scored> scored;
        for (std::size_t i = 0; i < sentence.size(); ++i) {
            if (index_->df(sentence[i].surface) == 0) continue;
            scored.push_back(Scored{i, &sentence[i], index_->idf(sentence[i].surface)});
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const Scored& a, const Scored& b) { return a.idf > b.idf; });
        if (scored.size() > static_cast<std::size_t>(cfg_.top_w)) {
            scored.resize(static_cast<std::size_t>(cfg_.top_w));
        }
        std::sort(scored.begin(), scored.end(),
                  [](const Scored& a, const Scored& b) { return a.pos < b.pos; });
        TokenSeq out;
        out.reserve(scored.size());
        for (const Scored& s : scored) out.push_back(*s.tok);
        return out;
    }

    PolicyConfig cfg_;
    const Bm25Index* index_;
    std::deque<Token> window_;
    std::uint64_t generated_ = 0;
    TokenSeq sentence_;
};

}  // namespace arag
