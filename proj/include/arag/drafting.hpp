// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "arag/common.hpp"
#include "arag/lm.hpp"
#include "arag/token.hpp"

namespace arag {

// N-gram table over this round's retrieved passages (plus, optionally, prior
// answers). For each (order-1)-token context the candidates are every token
// that follows an occurrence of the context inside one source sequence,
// ranked by occurrence count, ties by first position with the sources
// concatenated in build order.
class NgramIndex {
  public:
    static NgramIndex build(const std::vector<TokenSeq>& sources, int order) {
        if (order < 2) throw Error("n-gram order must be at least 2");
        NgramIndex idx;
        idx.order_ = order;
        const std::size_t ctx_len = static_cast<std::size_t>(order - 1);
        std::size_t base = 0;
        for (const TokenSeq& src : sources) {
            if (src.size() >= ctx_len + 1) {
                for (std::size_t i = 0; i + ctx_len < src.size(); ++i) {
                    std::vector<std::int64_t> ctx;
                    ctx.reserve(ctx_len);
                    for (std::size_t k = 0; k < ctx_len; ++k) ctx.push_back(src[i + k].id);
                    const Token& next = src[i + ctx_len];
                    auto& cands = idx.table_[ctx];
                    bool known = false;
                    for (Candidate& c : cands) {
                        if (c.token.id == next.id) {
                            c.count += 1;
                            known = true;
                            break;
                        }
                    }
                    if (!known) cands.push_back(Candidate{next, 1, base + i});
                }
            }
            base += src.size();
        }
        for (auto& [ctx, cands] : idx.table_) {
            std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a,
                                                            const Candidate& b) {
                if (a.count != b.count) return a.count > b.count;
                return a.first_pos < b.first_pos;
            });
        }
        return idx;
    }

    int order() const { return order_; }
    std::size_t context_count() const { return table_.size(); }

    std::optional<Token> next_after(const std::vector<std::int64_t>& context) const {
        auto it = table_.find(context);
        if (it == table_.end()) return std::nullopt;
        return it->second.front().token;
    }

    // Greedy table walk starting from the trailing context of what has been
    // generated so far. Stops at max_len or on the first unseen context.
    TokenSeq draft(const std::vector<std::int64_t>& recent, int max_len) const {
        const std::size_t ctx_len = static_cast<std::size_t>(order_ - 1);
        TokenSeq out;
        if (recent.size() < ctx_len) return out;
        std::vector<std::int64_t> ctx(recent.end() - static_cast<std::ptrdiff_t>(ctx_len),
                                      recent.end());
        while (out.size() < static_cast<std::size_t>(max_len)) {
            auto nxt = next_after(ctx);
            if (!nxt) break;
            out.push_back(*nxt);
            if (ctx_len > 0) {
                ctx.erase(ctx.begin());
                ctx.push_back(nxt->id);
            }
        }
        return out;
    }

  private:
    struct Candidate {
        Token token;
        std::size_t count = 0;
        std::size_t first_pos = 0;
    };

    int order_ = 2;
    std::map<std::vector<std::int64_t>, std::vector<Candidate>> table_;
};

// One generation step, speculative when the table has something to offer.
struct DraftStep {
    TokenSeq draft;
    std::vector<bool> verdicts;       // per draft token: accepted by the verifier
    TokenSeq emitted;                 // accepted prefix plus correction or bonus
    std::vector<double> confidences;  // per emitted token
    bool speculative = false;
};

// Advances generation by one verifier pass. The pending token is the last
// emitted but not yet absorbed token. With an empty draft this is a plain
// decode step; otherwise the single verify pass scores every draft prefix,
// the matching prefix is accepted, and the verifier's own next token is
// appended (a correction on mismatch, a bonus on full acceptance), so
// emitted always holds accepted + 1 tokens. All but the last emitted token
// are absorbed; the last becomes the caller's next pending token.
inline DraftStep speculative_step(const LmBackend& lm, LmContext& ctx, const NgramIndex& index,
                                  const Token& pending, int max_draft, CostCounters& cost) {
    DraftStep step;
    std::vector<std::int64_t> recent;
    const std::size_t ctx_len = static_cast<std::size_t>(index.order() - 1);
    if (ctx_len >= 1) {
        recent = ctx.tail_ids(ctx_len - 1);
        recent.push_back(pending.id);
    }
    step.draft = index.draft(recent, max_draft);

    if (step.draft.empty()) {
        LmOutput out = lm.decode_step(ctx, pending, cost);
        step.emitted.push_back(out.token);
        step.confidences.push_back(out.confidence);
        return step;
    }

    step.speculative = true;
    lm.absorb(ctx, {pending});
    std::vector<LmOutput> outs = lm.verify_draft(ctx, step.draft, cost);
    std::size_t accepted = 0;
    while (accepted < step.draft.size() && step.draft[accepted].id == outs[accepted].token.id) {
        ++accepted;
    }
    step.verdicts.assign(step.draft.size(), false);
    for (std::size_t i = 0; i < accepted; ++i) step.verdicts[i] = true;
    for (std::size_t i = 0; i < accepted; ++i) {
        step.emitted.push_back(step.draft[i]);
        step.confidences.push_back(outs[i].confidence);
    }
    step.emitted.push_back(outs[accepted].token);
    step.confidences.push_back(outs[accepted].confidence);
    TokenSeq absorb_now(step.emitted.begin(), step.emitted.end() - 1);
    lm.absorb(ctx, absorb_now);
    return step;
}

}  // namespace arag
