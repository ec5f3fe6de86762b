#pragma once

// Deterministic word/punctuation tokenizer used for all token budgeting.
// A token is either a maximal run of alphanumeric bytes (non-ASCII bytes
// count as word characters) or a single punctuation character. Whitespace
// separates tokens and is never a token itself. The interface is virtual so
// a model-specific tokenizer can be dropped in without changing any
// downstream contract.

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace phenorag {

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
    virtual std::size_t count(std::string_view text) const { return tokenize(text).size(); }
};

class WordPunctTokenizer final : public Tokenizer {
public:
    struct Span {
        std::size_t begin;
        std::size_t end;  // one past the last byte
    };

    static bool is_space(unsigned char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    }
    static bool is_word_char(unsigned char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
    }

    // Byte spans of every token; the basis for tokenize(), count() and the
    // chunker's last-resort split points.
    static std::vector<Span> spans(std::string_view text) {
        std::vector<Span> out;
        std::size_t i = 0;
        const std::size_t n = text.size();
        while (i < n) {
            unsigned char c = static_cast<unsigned char>(text[i]);
            if (is_space(c)) {
                ++i;
            } else if (is_word_char(c)) {
                std::size_t j = i + 1;
                while (j < n && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
                out.push_back({i, j});
                i = j;
            } else {
                out.push_back({i, i + 1});
                ++i;
            }
        }
        return out;
    }

    std::vector<std::string> tokenize(std::string_view text) const override {
        std::vector<std::string> out;
        for (const Span& s : spans(text)) out.emplace_back(text.substr(s.begin, s.end - s.begin));
        return out;
    }

    std::size_t count(std::string_view text) const override {
        std::size_t n = 0;
        std::size_t i = 0;
        const std::size_t len = text.size();
        while (i < len) {
            unsigned char c = static_cast<unsigned char>(text[i]);
            if (is_space(c)) {
                ++i;
            } else if (is_word_char(c)) {
                ++n;
                ++i;
                while (i < len && is_word_char(static_cast<unsigned char>(text[i]))) ++i;
            } else {
                ++n;
                ++i;
            }
        }
        return n;
    }
};

inline const Tokenizer& default_tokenizer() {
    static const WordPunctTokenizer tok;
    return tok;
}

}  // namespace phenorag
