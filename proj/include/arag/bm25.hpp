// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "arag/common.hpp"
#include "arag/corpus.hpp"
#include "arag/token.hpp"

namespace arag {

struct RetrievalHit {
    std::string passage_id;
    double score = 0.0;
};

struct RetrievalResult {
    TokenSeq query;
    std::vector<RetrievalHit> hits;  // score descending, ties by ascending id

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(hits.size());
        for (const auto& h : hits) out.push_back(h.passage_id);
        return out;
    }
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

// Classic BM25 over whole passages. idf = ln(1 + (N - df + 0.5) / (df + 0.5))
// (always positive, so hit scores stay positive). Repeated query terms
// contribute once per occurrence. Only passages sharing at least one query
// term are scored; everything else is absent from the result.
class Bm25Index {
public:
    Bm25Index() = default;

    static Bm25Index build(const CorpusStore& store, Bm25Params params = {}) {
        if (store.size() == 0) throw Error("bm25: cannot build an index over an empty corpus");
        Bm25Index idx;
        idx.params_ = params;
        idx.mode_ = store.tokenizer_mode();
        size_t total_len = 0;
        for (const auto& [id, passage] : store.passages()) {
            size_t doc = idx.doc_ids_.size();
            idx.doc_ids_.push_back(id);
            idx.doc_len_.push_back(passage.tokens.size());
            total_len += passage.tokens.size();
            std::map<std::string, int> tf;
            for (const Token& t : passage.tokens) tf[t.surface] += 1;
            for (const auto& [term, count] : tf) {
                idx.postings_[term].push_back({doc, count});
            }
        }
        idx.avgdl_ = static_cast<double>(total_len) / static_cast<double>(idx.doc_ids_.size());
        return idx;
    }

    size_t doc_count() const { return doc_ids_.size(); }
    double avgdl() const { return avgdl_; }
    const Bm25Params& params() const { return params_; }
    TokenizerMode tokenizer_mode() const { return mode_; }

    int df(const std::string& term) const {
        auto it = postings_.find(term);
        return it == postings_.end() ? 0 : static_cast<int>(it->second.size());
    }

    double idf(const std::string& term) const {
        int d = df(term);
        double n = static_cast<double>(doc_count());
        return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
    }

    RetrievalResult retrieve(const TokenSeq& query, size_t n) const {
        RetrievalResult result;
        result.query = query;
        if (n == 0) return result;
        std::map<size_t, double> scores;  // doc index -> accumulated score
        for (const Token& q : query) {
            auto it = postings_.find(q.surface);
            if (it == postings_.end()) continue;
            double term_idf = idf(q.surface);
            for (const auto& [doc, tf] : it->second) {
                double dl = static_cast<double>(doc_len_[doc]);
                double denom = tf + params_.k1 * (1.0 - params_.b + params_.b * dl / avgdl_);
                scores[doc] += term_idf * tf * (params_.k1 + 1.0) / denom;
            }
        }
        std::vector<RetrievalHit> hits;
        hits.reserve(scores.size());
        for (const auto& [doc, score] : scores) {
            hits.push_back({doc_ids_[doc], score});
        }
        std::stable_sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.passage_id < b.passage_id;
        });
        if (hits.size() > n) hits.resize(n);
        result.hits = std::move(hits);
        return result;
    }

    RetrievalResult retrieve_text(const std::string& query, size_t n) const {
        return retrieve(tokenize(query, mode_), n);
    }

    std::uint64_t digest() const {
        std::uint64_t h = kFnvOffset;
        h = fnv1a64(std::to_string(params_.k1) + "/" + std::to_string(params_.b), h);
        for (size_t d = 0; d < doc_ids_.size(); ++d) {
            h = fnv1a64(doc_ids_[d], h);
            h = fnv1a64_u64(doc_len_[d], h);
        }
        for (const auto& [term, plist] : postings_) {
            h = fnv1a64(term, h);
            for (const auto& [doc, tf] : plist) {
                h = fnv1a64_u64(doc, h);
                h = fnv1a64_u64(static_cast<std::uint64_t>(tf), h);
            }
        }
        return h;
    }

    void save(const std::filesystem::path& path) const {
        nlohmann::ordered_json j;
        j["schema_version"] = kIndexSchemaVersion;
        j["k1"] = params_.k1;
        j["b"] = params_.b;
        j["tokenizer_mode"] = tokenizer_mode_name(mode_);
        nlohmann::ordered_json docs = nlohmann::ordered_json::array();
        for (size_t d = 0; d < doc_ids_.size(); ++d) {
            docs.push_back({{"id", doc_ids_[d]}, {"len", doc_len_[d]}});
        }
        j["docs"] = std::move(docs);
        nlohmann::ordered_json postings;
        for (const auto& [term, plist] : postings_) {
            nlohmann::ordered_json entry = nlohmann::ordered_json::array();
            for (const auto& [doc, tf] : plist) entry.push_back({doc, tf});
            postings[term] = std::move(entry);
        }
        j["postings"] = std::move(postings);
        j["digest"] = to_hex(digest());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("bm25: cannot write " + path.string());
        out << j.dump(2) << "\n";
    }

    static Bm25Index load(const std::filesystem::path& path) {
        auto j = CorpusStore::parse_json_file(path);
        int version = j.at("schema_version").get<int>();
        if (version != kIndexSchemaVersion) {
            throw Error("bm25: unsupported schema_version " + std::to_string(version));
        }
        Bm25Index idx;
        idx.params_.k1 = j.at("k1").get<double>();
        idx.params_.b = j.at("b").get<double>();
        idx.mode_ = tokenizer_mode_from_name(j.at("tokenizer_mode").get<std::string>());
        size_t total_len = 0;
        for (const auto& d : j.at("docs")) {
            idx.doc_ids_.push_back(d.at("id").get<std::string>());
            idx.doc_len_.push_back(d.at("len").get<size_t>());
            total_len += idx.doc_len_.back();
        }
        if (idx.doc_ids_.empty()) throw Error("bm25: index file has no documents");
        idx.avgdl_ = static_cast<double>(total_len) / static_cast<double>(idx.doc_ids_.size());
        for (const auto& [term, plist] : j.at("postings").items()) {
            for (const auto& p : plist) {
                idx.postings_[term].push_back({p.at(0).get<size_t>(), p.at(1).get<int>()});
            }
        }
        std::string expect = j.at("digest").get<std::string>();
        if (to_hex(idx.digest()) != expect) {
            throw Error("bm25: index digest mismatch in " + path.string());
        }
        return idx;
    }

private:
    Bm25Params params_;
    TokenizerMode mode_ = TokenizerMode::Whitespace;
    std::vector<std::string> doc_ids_;   // store iteration order (id-sorted)
    std::vector<size_t> doc_len_;
    double avgdl_ = 0.0;
    std::map<std::string, std::vector<std::pair<size_t, int>>> postings_;
};

// Fraction of the later result already present in the earlier one:
// |ids(a) ∩ ids(b)| / max(1, |ids(b)|) where b is the later round.
inline double overlap_ratio(const std::vector<std::string>& earlier,
                            const std::vector<std::string>& later) {
    std::set<std::string> a(earlier.begin(), earlier.end());
    size_t shared = 0;
    for (const auto& id : later) {
        if (a.count(id)) ++shared;
    }
    return static_cast<double>(shared) / static_cast<double>(std::max<size_t>(1, later.size()));
}

inline double overlap_ratio(const RetrievalResult& earlier, const RetrievalResult& later) {
    return overlap_ratio(earlier.ids(), later.ids());
}

}  // namespace arag
