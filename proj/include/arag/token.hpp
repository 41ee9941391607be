// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "arag/common.hpp"

namespace arag {

// A token id is a deterministic function of the surface alone (FNV-1a masked
// to a non-negative int64), so corpora, queries and generated text agree on
// ids with no shared vocabulary state.
struct Token {
    std::int64_t id = 0;
    std::string surface;

    bool operator==(const Token& o) const { return id == o.id && surface == o.surface; }
};

using TokenSeq = std::vector<Token>;

inline std::int64_t token_id_of(std::string_view surface) {
    return static_cast<std::int64_t>(fnv1a64(surface) & 0x7fffffffffffffffull);
}

inline Token make_token(std::string_view surface) {
    return Token{token_id_of(surface), std::string(surface)};
}

// Session end marker. Corpora may contain it as an ordinary word; generation
// stops when it is emitted.
inline const std::string kEndMarkerSurface = "<eos>";
inline std::int64_t end_marker_id() {
    static const std::int64_t id = token_id_of(kEndMarkerSurface);
    return id;
}

// Hash-fallback tokens carry a reserved prefix so synthetic corpora can avoid
// colliding with them (and tests can spot them at a glance).
inline constexpr char kFallbackPrefix = '~';

enum class TokenizerMode { Whitespace, Byte };

inline std::string tokenizer_mode_name(TokenizerMode m) {
    return m == TokenizerMode::Whitespace ? "whitespace" : "byte";
}

inline TokenizerMode tokenizer_mode_from_name(const std::string& name) {
    if (name == "whitespace") return TokenizerMode::Whitespace;
    if (name == "byte") return TokenizerMode::Byte;
    throw Error("unknown tokenizer mode: " + name);
}

namespace detail {

// Minimal UTF-8 validity scan; rejects overlong forms and bad continuations.
inline bool valid_utf8(std::string_view text) {
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        size_t len;
        if (c < 0x80) {
            len = 1;
        } else if ((c & 0xe0) == 0xc0) {
            if (c < 0xc2) return false;
            len = 2;
        } else if ((c & 0xf0) == 0xe0) {
            len = 3;
        } else if ((c & 0xf8) == 0xf0) {
            if (c > 0xf4) return false;
            len = 4;
        } else {
            return false;
        }
        if (i + len > n) return false;
        for (size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) return false;
        }
        i += len;
    }
    return true;
}

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace detail

// Splits text into tokens. Whitespace mode: maximal runs of non-whitespace.
// Byte mode: one token per byte. Same text always yields the same id sequence.
inline TokenSeq tokenize(std::string_view text, TokenizerMode mode = TokenizerMode::Whitespace) {
    if (!detail::valid_utf8(text)) {
        throw Error("tokenize: input is not valid UTF-8");
    }
    TokenSeq out;
    if (mode == TokenizerMode::Byte) {
        out.reserve(text.size());
        for (char c : text) {
            out.push_back(make_token(std::string_view(&c, 1)));
        }
        return out;
    }
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && detail::is_space(text[i])) ++i;
        size_t start = i;
        while (i < text.size() && !detail::is_space(text[i])) ++i;
        if (i > start) {
            out.push_back(make_token(text.substr(start, i - start)));
        }
    }
    return out;
}

// Inverse of tokenize up to whitespace normalization (whitespace mode joins
// with single spaces; byte mode concatenates).
inline std::string detokenize(const TokenSeq& tokens, TokenizerMode mode = TokenizerMode::Whitespace) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (mode == TokenizerMode::Whitespace && i > 0) out += ' ';
        out += tokens[i].surface;
    }
    return out;
}

inline std::uint64_t token_seq_digest(const TokenSeq& tokens, std::uint64_t seed = kFnvOffset) {
    std::uint64_t h = seed;
    for (const Token& t : tokens) {
        h = fnv1a64(t.surface, h);
        h = fnv1a64("\x1f", h);  // separator so ["ab","c"] != ["a","bc"]
    }
    return h;
}

}  // namespace arag
