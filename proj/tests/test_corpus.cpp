// SPDX-License-Identifier: Apache-2.0
/*
 * Tokenizer and corpus store tests:
 *  - whitespace/byte tokenization and the round-trip guarantee
 *  - fixed-size chunking and the concatenation identity
 *  - JSONL ingest, error reporting, and save/load stability
 */
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "arag/corpus.hpp"
#include "arag/token.hpp"

using namespace arag;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("arag_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string random_words(DetRng& rng, size_t count) {
    std::string out;
    for (size_t i = 0; i < count; ++i) {
        if (i) out += ' ';
        out += "w" + std::to_string(rng.below(500));
    }
    return out;
}

}  // namespace

TEST_CASE("tokenize splits a two-word string into two tokens", "[corpus]") {
    auto toks = tokenize("Rosa Luxemburg");
    REQUIRE(toks.size() == 2);
    CHECK(toks[0].surface == "Rosa");
    CHECK(toks[1].surface == "Luxemburg");
    CHECK(toks[0].id >= 0);
    CHECK(toks[0].id != toks[1].id);
}

TEST_CASE("tokenize collapses whitespace runs and trims edges", "[corpus]") {
    auto toks = tokenize("  a\t\tb \n c  ");
    REQUIRE(toks.size() == 3);
    CHECK(toks[0].surface == "a");
    CHECK(toks[1].surface == "b");
    CHECK(toks[2].surface == "c");
}

TEST_CASE("tokenize is deterministic: same text, same ids", "[corpus]") {
    auto a = tokenize("the cat sat on the mat");
    auto b = tokenize("the cat sat on the mat");
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
    }
    CHECK(a[0].id == a[4].id);  // both "the"
}

TEST_CASE("tokenize rejects invalid UTF-8", "[corpus]") {
    std::string bad = "ok ";
    bad += static_cast<char>(0xff);
    CHECK_THROWS_AS(tokenize(bad), Error);
}

TEST_CASE("byte mode emits one token per byte and concatenates back", "[corpus]") {
    auto toks = tokenize("ab c", TokenizerMode::Byte);
    REQUIRE(toks.size() == 4);
    CHECK(toks[0].surface == "a");
    CHECK(toks[2].surface == " ");
    CHECK(detokenize(toks, TokenizerMode::Byte) == "ab c");
}

TEST_CASE("round trip: detokenize(tokenize(x)) is identity up to whitespace", "[corpus][property]") {
    DetRng rng(0x5eed0001);
    for (int iter = 0; iter < 1000; ++iter) {
        std::string text = random_words(rng, rng.below(30));
        auto toks = tokenize(text);
        std::string back = detokenize(toks);
        CHECK(tokenize(back) == toks);
        // Normalized text round-trips byte-exactly.
        CHECK(detokenize(tokenize(back)) == back);
    }
}

TEST_CASE("chunk splits 250 tokens at size 100 into 100/100/50", "[corpus]") {
    TokenSeq toks;
    for (int i = 0; i < 250; ++i) toks.push_back(make_token("t" + std::to_string(i)));
    auto parts = chunk(toks, 100);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].size() == 100);
    CHECK(parts[1].size() == 100);
    CHECK(parts[2].size() == 50);
}

TEST_CASE("chunk on an exact multiple has no short tail", "[corpus]") {
    TokenSeq toks;
    for (int i = 0; i < 200; ++i) toks.push_back(make_token("t" + std::to_string(i)));
    auto parts = chunk(toks, 100);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].size() == 100);
    CHECK(parts[1].size() == 100);
}

TEST_CASE("chunk of empty input is empty, not an error", "[corpus]") {
    CHECK(chunk({}, 100).empty());
}

TEST_CASE("chunk concatenation reproduces the input exactly", "[corpus][property]") {
    DetRng rng(0x5eed0002);
    for (int iter = 0; iter < 200; ++iter) {
        TokenSeq toks;
        size_t n = rng.below(400);
        for (size_t i = 0; i < n; ++i) toks.push_back(make_token("x" + std::to_string(rng.below(50))));
        size_t size = 1 + rng.below(120);
        auto parts = chunk(toks, size);
        TokenSeq glued;
        for (size_t i = 0; i < parts.size(); ++i) {
            if (i + 1 < parts.size()) CHECK(parts[i].size() == size);
            glued.insert(glued.end(), parts[i].begin(), parts[i].end());
        }
        CHECK(glued == toks);
    }
}

TEST_CASE("ingest splits two docs of 150 and 80 tokens into 3 passages", "[corpus]") {
    std::ostringstream doc1, doc2;
    for (int i = 0; i < 150; ++i) doc1 << (i ? " " : "") << "a" << i;
    for (int i = 0; i < 80; ++i) doc2 << (i ? " " : "") << "b" << i;
    std::stringstream in;
    in << R"({"id": "doc1", "text": ")" << doc1.str() << "\"}\n";
    in << R"({"id": "doc2", "text": ")" << doc2.str() << "\"}\n";

    auto store = ingest_jsonl(in, 100);
    REQUIRE(store.size() == 3);
    CHECK(store.get("doc1#0").tokens.size() == 100);
    CHECK(store.get("doc1#1").tokens.size() == 50);
    CHECK(store.get("doc2#0").tokens.size() == 80);
    CHECK(store.get("doc1#1").source_doc == "doc1");
    CHECK(store.get("doc1#1").chunk_index == 1);
}

TEST_CASE("ingest reports malformed records with their line number", "[corpus]") {
    std::stringstream in;
    in << R"({"id": "doc1", "text": "fine"})" << "\n";
    in << "{not json\n";
    try {
        ingest_jsonl(in, 100, TokenizerMode::Whitespace, "input.jsonl");
        FAIL("expected ingest error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("input.jsonl line 2") != std::string::npos);
    }
}

TEST_CASE("ingest rejects duplicate document ids, naming the id", "[corpus]") {
    std::stringstream in;
    in << R"({"id": "dup", "text": "one"})" << "\n";
    in << R"({"id": "dup", "text": "two"})" << "\n";
    try {
        ingest_jsonl(in, 100);
        FAIL("expected duplicate id error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("dup") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
    }
}

TEST_CASE("ingest of an empty stream yields an empty store", "[corpus]") {
    std::stringstream in;
    auto store = ingest_jsonl(in, 100);
    CHECK(store.size() == 0);
}

TEST_CASE("document with empty text contributes no passages", "[corpus]") {
    std::stringstream in;
    in << R"({"id": "empty", "text": ""})" << "\n";
    auto store = ingest_jsonl(in, 100);
    CHECK(store.size() == 0);
}

TEST_CASE("store iteration order is passage-id sorted and stable", "[corpus]") {
    std::stringstream in;
    in << R"({"id": "zz", "text": "one two"})" << "\n";
    in << R"({"id": "aa", "text": "three four"})" << "\n";
    auto store = ingest_jsonl(in, 100);
    std::vector<std::string> ids;
    for (const auto& [id, p] : store.passages()) ids.push_back(id);
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == "aa#0");
    CHECK(ids[1] == "zz#0");
}

TEST_CASE("save then load reproduces an identical store", "[corpus]") {
    DetRng rng(0x5eed0003);
    std::stringstream in;
    in << R"({"id": "d1", "text": ")" << random_words(rng, 230) << "\"}\n";
    in << R"({"id": "d2", "text": ")" << random_words(rng, 42) << "\"}\n";
    auto store = ingest_jsonl(in, 100);

    auto dir = temp_dir("store_roundtrip");
    store.save(dir);
    auto reopened = CorpusStore::load(dir);

    REQUIRE(reopened.size() == store.size());
    CHECK(reopened.digest() == store.digest());
    CHECK(reopened.passage_size() == store.passage_size());
    for (const auto& [id, p] : store.passages()) {
        CHECK(reopened.get(id).tokens == p.tokens);
    }

    // Saving the reopened store produces byte-identical files.
    auto dir2 = temp_dir("store_roundtrip2");
    reopened.save(dir2);
    for (const char* name : {"manifest.json", "passages.jsonl"}) {
        std::ifstream f1(dir / name), f2(dir2 / name);
        std::stringstream s1, s2;
        s1 << f1.rdbuf();
        s2 << f2.rdbuf();
        CHECK(s1.str() == s2.str());
    }
}

TEST_CASE("load rejects a tampered passages file via the digest", "[corpus]") {
    std::stringstream in;
    in << R"({"id": "d1", "text": "alpha beta gamma"})" << "\n";
    auto store = ingest_jsonl(in, 100);
    auto dir = temp_dir("store_tamper");
    store.save(dir);

    // Rewrite passages.jsonl with a modified token.
    {
        std::ofstream out(dir / "passages.jsonl", std::ios::binary);
        out << R"({"id":"d1#0","source":"d1","chunk":0,"tokens":["alpha","beta","DELTA"]})" << "\n";
    }
    CHECK_THROWS_AS(CorpusStore::load(dir), Error);
}

TEST_CASE("unknown passage lookups name the id", "[corpus]") {
    CorpusStore store(100);
    try {
        store.get("nope#0");
        FAIL("expected lookup error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("nope#0") != std::string::npos);
    }
}
