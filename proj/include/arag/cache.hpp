// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arag/common.hpp"
#include "arag/kv.hpp"

namespace arag {

struct CacheStats {
    std::uint64_t lookups = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;

    std::optional<double> hit_ratio() const {
        if (lookups == 0) return std::nullopt;
        return static_cast<double>(hits) / static_cast<double>(lookups);
    }
};

// One requested document in rank order; segment == nullptr means the caller
// must prefill it fresh (and normally store the result back).
struct FilterEntry {
    std::string doc_id;
    const KvSegment* segment = nullptr;
};

struct FilterOutcome {
    std::vector<FilterEntry> entries;  // request order
    std::size_t hits = 0;
    std::size_t misses = 0;
};

// Session-scoped store of document KV segments with LRU eviction.
//
// Segment pointers handed out by filter() stay valid until the next store();
// the intended sequence per round is filter -> prefill -> store. Entries are
// kept exactly as stored: under bleed a reused segment keeps the context
// chain it was built in, which is the staleness this simulator studies.
class CacheSpace {
  public:
    explicit CacheSpace(std::size_t capacity = 64) : capacity_(capacity) {
        if (capacity == 0) throw Error("cache capacity must be positive");
    }

    FilterOutcome filter(const std::vector<std::string>& ranked_ids) {
        FilterOutcome out;
        out.entries.reserve(ranked_ids.size());
        for (const std::string& id : ranked_ids) {
            stats_.lookups += 1;
            auto it = entries_.find(id);
            if (it == entries_.end()) {
                stats_.misses += 1;
                out.misses += 1;
                out.entries.push_back(FilterEntry{id, nullptr});
            } else {
                it->second.last_used = ++tick_;
                stats_.hits += 1;
                out.hits += 1;
                out.entries.push_back(FilterEntry{id, &it->second.segment});
            }
        }
        return out;
    }

    // Returns the ids evicted to make room (usually none).
    std::vector<std::string> store(KvSegment segment) {
        if (segment.role != SpanRole::Document) {
            throw Error("only document segments are cacheable (got span \"" + segment.doc_id +
                        "\")");
        }
        if (!segment_consistent(segment)) {
            throw Error("refusing to cache inconsistent segment \"" + segment.doc_id + "\"");
        }
        if (entries_.count(segment.doc_id)) {
            throw Error("segment \"" + segment.doc_id + "\" is already cached");
        }
        std::string id = segment.doc_id;
        entries_.emplace(std::move(id), Entry{std::move(segment), ++tick_});
        std::vector<std::string> evicted;
        while (entries_.size() > capacity_) {
            auto victim = entries_.begin();
            for (auto it = entries_.begin(); it != entries_.end(); ++it) {
                if (it->second.last_used < victim->second.last_used) victim = it;
            }
            evicted.push_back(victim->first);
            entries_.erase(victim);
            stats_.evictions += 1;
        }
        return evicted;
    }

    bool contains(const std::string& id) const { return entries_.count(id) > 0; }
    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const CacheStats& stats() const { return stats_; }

  private:
    struct Entry {
        KvSegment segment;
        std::uint64_t last_used = 0;
    };

    std::size_t capacity_;
    std::uint64_t tick_ = 0;
    std::map<std::string, Entry> entries_;
    CacheStats stats_;
};

// Sticky document -> position slot assignment for one session. A document
// keeps its slot for the whole session even across eviction, so re-deriving
// its segment reproduces the original bit for bit (bleed off).
class SlotRegistry {
  public:
    int slot_for(const std::string& doc_id) {
        auto it = slots_.find(doc_id);
        if (it != slots_.end()) return it->second;
        int s = next_++;
        slots_.emplace(doc_id, s);
        return s;
    }

    std::optional<int> lookup(const std::string& doc_id) const {
        auto it = slots_.find(doc_id);
        if (it == slots_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return slots_.size(); }

  private:
    std::map<std::string, int> slots_;
    int next_ = 0;
};

}  // namespace arag
