// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "arag/common.hpp"
#include "arag/token.hpp"

namespace arag {

struct Passage {
    std::string passage_id;  // "<source_doc>#<chunk_index>"
    std::string source_doc;
    int chunk_index = 0;
    TokenSeq tokens;
};

// Splits a token sequence into fixed-size passages. Every passage except the
// last has exactly passage_size tokens; concatenating the output reproduces
// the input.
inline std::vector<TokenSeq> chunk(const TokenSeq& tokens, size_t passage_size = 100) {
    if (passage_size == 0) throw Error("chunk: passage_size must be >= 1");
    std::vector<TokenSeq> out;
    for (size_t i = 0; i < tokens.size(); i += passage_size) {
        size_t end = std::min(tokens.size(), i + passage_size);
        out.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                         tokens.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

// Passage collection keyed and iterated by passage_id (lexicographic), so
// every walk over the store is stable across runs and platforms.
class CorpusStore {
public:
    CorpusStore() = default;
    explicit CorpusStore(size_t passage_size, TokenizerMode mode = TokenizerMode::Whitespace)
        : passage_size_(passage_size), mode_(mode) {}

    void add_document(const std::string& doc_id, const std::string& text) {
        if (doc_id.empty()) throw Error("ingest: document with empty id");
        if (!seen_docs_.insert(doc_id).second) {
            throw Error("ingest: duplicate document id \"" + doc_id + "\"");
        }
        TokenSeq toks = tokenize(text, mode_);
        auto pieces = chunk(toks, passage_size_);
        for (size_t i = 0; i < pieces.size(); ++i) {
            Passage p;
            p.source_doc = doc_id;
            p.chunk_index = static_cast<int>(i);
            p.passage_id = doc_id + "#" + std::to_string(i);
            p.tokens = std::move(pieces[i]);
            passages_.emplace(p.passage_id, std::move(p));
        }
    }

    bool has(const std::string& passage_id) const { return passages_.count(passage_id) > 0; }

    const Passage& get(const std::string& passage_id) const {
        auto it = passages_.find(passage_id);
        if (it == passages_.end()) throw Error("corpus: unknown passage id \"" + passage_id + "\"");
        return it->second;
    }

    const std::map<std::string, Passage>& passages() const { return passages_; }
    size_t size() const { return passages_.size(); }
    size_t passage_size() const { return passage_size_; }
    TokenizerMode tokenizer_mode() const { return mode_; }

    size_t token_count() const {
        size_t n = 0;
        for (const auto& [id, p] : passages_) n += p.tokens.size();
        return n;
    }

    std::uint64_t digest() const {
        std::uint64_t h = kFnvOffset;
        for (const auto& [id, p] : passages_) {
            h = fnv1a64(id, h);
            h = token_seq_digest(p.tokens, h);
        }
        return h;
    }

    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        nlohmann::ordered_json manifest;
        manifest["schema_version"] = kStoreSchemaVersion;
        manifest["tokenizer_mode"] = tokenizer_mode_name(mode_);
        manifest["passage_size"] = passage_size_;
        manifest["passage_count"] = passages_.size();
        manifest["token_count"] = token_count();
        manifest["corpus_digest"] = to_hex(digest());
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");

        std::string lines;
        for (const auto& [id, p] : passages_) {
            nlohmann::ordered_json rec;
            rec["id"] = p.passage_id;
            rec["source"] = p.source_doc;
            rec["chunk"] = p.chunk_index;
            nlohmann::ordered_json toks = nlohmann::ordered_json::array();
            for (const Token& t : p.tokens) toks.push_back(t.surface);
            rec["tokens"] = std::move(toks);
            lines += rec.dump() + "\n";
        }
        write_file(dir / "passages.jsonl", lines);
    }

    static CorpusStore load(const std::filesystem::path& dir) {
        auto manifest = parse_json_file(dir / "manifest.json");
        int version = manifest.at("schema_version").get<int>();
        if (version != kStoreSchemaVersion) {
            throw Error("store: unsupported schema_version " + std::to_string(version));
        }
        CorpusStore store(manifest.at("passage_size").get<size_t>(),
                          tokenizer_mode_from_name(manifest.at("tokenizer_mode").get<std::string>()));
        std::ifstream in(dir / "passages.jsonl");
        if (!in) throw Error("store: cannot open " + (dir / "passages.jsonl").string());
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json rec;
            try {
                rec = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw Error("store: passages.jsonl line " + std::to_string(line_no) + ": " + e.what());
            }
            Passage p;
            p.passage_id = rec.at("id").get<std::string>();
            p.source_doc = rec.at("source").get<std::string>();
            p.chunk_index = rec.at("chunk").get<int>();
            for (const auto& s : rec.at("tokens")) {
                p.tokens.push_back(make_token(s.get<std::string>()));
            }
            if (!store.passages_.emplace(p.passage_id, p).second) {
                throw Error("store: passages.jsonl line " + std::to_string(line_no) +
                            ": duplicate passage id \"" + p.passage_id + "\"");
            }
            store.seen_docs_.insert(p.source_doc);
        }
        std::string expect = manifest.at("corpus_digest").get<std::string>();
        if (to_hex(store.digest()) != expect) {
            throw Error("store: corpus digest mismatch (manifest " + expect + ", data " +
                        to_hex(store.digest()) + ")");
        }
        return store;
    }

    static nlohmann::json parse_json_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open " + path.string());
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ": " + e.what());
        }
    }

private:
    static void write_file(const std::filesystem::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write " + path.string());
        out << content;
    }

    size_t passage_size_ = 100;
    TokenizerMode mode_ = TokenizerMode::Whitespace;
    std::map<std::string, Passage> passages_;
    std::set<std::string> seen_docs_;
};

// Reads corpus documents from a JSON-lines stream of {"id": ..., "text": ...}
// records. Errors carry 1-based line numbers.
inline CorpusStore ingest_jsonl(std::istream& in, size_t passage_size = 100,
                                TokenizerMode mode = TokenizerMode::Whitespace,
                                const std::string& stream_name = "<stream>") {
    CorpusStore store(passage_size, mode);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(stream_name + " line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") ||
            !rec["id"].is_string() || !rec["text"].is_string()) {
            throw Error(stream_name + " line " + std::to_string(line_no) +
                        ": expected {\"id\": string, \"text\": string}");
        }
        try {
            store.add_document(rec["id"].get<std::string>(), rec["text"].get<std::string>());
        } catch (const Error& e) {
            throw Error(stream_name + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return store;
}

inline CorpusStore ingest_jsonl_file(const std::filesystem::path& path, size_t passage_size = 100,
                                     TokenizerMode mode = TokenizerMode::Whitespace) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return ingest_jsonl(in, passage_size, mode, path.string());
}

}  // namespace arag
