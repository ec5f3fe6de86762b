#pragma once

// Text-to-vector services: a deterministic seeded mock and a remote
// JSON-over-HTTP provider behind one interface. Default dimension is 768.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "phenorag/errors.hpp"
#include "phenorag/hash.hpp"
#include "phenorag/tokenize.hpp"

namespace phenorag {

inline constexpr std::size_t kDefaultEmbeddingDim = 768;
inline constexpr std::size_t kDefaultMaxSeqLen = 512;

struct EmbeddingVector {
    std::vector<float> values;
    double norm = 0.0;

    static EmbeddingVector from_values(std::vector<float> v) {
        EmbeddingVector e;
        e.values = std::move(v);
        double s = 0.0;
        for (float x : e.values) s += static_cast<double>(x) * x;
        e.norm = std::sqrt(s);
        return e;
    }
    std::size_t dim() const { return values.size(); }
};

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("cosine: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
    return dot / (a.norm * b.norm);
}

struct TokenEmbeddings {
    std::vector<std::string> tokens;
    std::vector<EmbeddingVector> vectors;
    bool truncated = false;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual EmbeddingVector embed_text(const std::string& text) const = 0;
    virtual TokenEmbeddings embed_tokens(const std::string& text, std::size_t max_len = kDefaultMaxSeqLen) const = 0;
    // Folded into index fingerprints; must change whenever the provider's
    // output could change.
    virtual std::string config_fingerprint() const = 0;
};

// Pure function: seeded hash of the text expanded to a unit-norm vector.
inline EmbeddingVector mock_embed(std::string_view text, std::uint64_t seed,
                                  std::size_t dim = kDefaultEmbeddingDim) {
    std::uint64_t state = fnv1a64(text) ^ (seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
    std::vector<float> v(dim);
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        // Uniform in [-1, 1).
        double x = static_cast<double>(splitmix64(state) >> 11) * (2.0 / 9007199254740992.0) - 1.0;
        v[i] = static_cast<float>(x);
        norm_sq += x * x;
    }
    double inv = norm_sq > 0 ? 1.0 / std::sqrt(norm_sq) : 0.0;
    for (float& x : v) x = static_cast<float>(x * inv);
    return EmbeddingVector::from_values(std::move(v));
}

class MockEmbedder final : public Embedder {
public:
    explicit MockEmbedder(std::uint64_t seed = 0, std::size_t dim = kDefaultEmbeddingDim,
                          std::size_t max_seq_len = kDefaultMaxSeqLen)
        : seed_(seed), dim_(dim), max_seq_len_(max_seq_len) {}

    std::size_t dimension() const override { return dim_; }

    EmbeddingVector embed_text(const std::string& text) const override {
        if (text.empty()) throw EmptyInput("embed_text: empty input");
        return mock_embed(text, seed_, dim_);
    }

    TokenEmbeddings embed_tokens(const std::string& text, std::size_t max_len = kDefaultMaxSeqLen) const override {
        if (text.empty()) throw EmptyInput("embed_tokens: empty input");
        std::size_t limit = std::min(max_len, max_seq_len_);
        TokenEmbeddings out;
        out.tokens = default_tokenizer().tokenize(text);
        if (out.tokens.size() > limit) {
            out.tokens.resize(limit);
            out.truncated = true;
        }
        out.vectors.reserve(out.tokens.size());
        // Per-token, position-independent: the same token always maps to
        // the same vector.
        for (const std::string& tok : out.tokens) out.vectors.push_back(mock_embed(tok, seed_, dim_));
        return out;
    }

    std::string config_fingerprint() const override {
        return "mock:seed=" + std::to_string(seed_) + ":dim=" + std::to_string(dim_);
    }

private:
    std::uint64_t seed_;
    std::size_t dim_;
    std::size_t max_seq_len_;
};

struct RemoteEmbedderConfig {
    std::string url;            // e.g. http://host:port/embed
    std::string bearer_key;     // optional
    int timeout_seconds = 30;
    int max_retries = 3;
    int backoff_initial_ms = 250;
    std::size_t expected_dim = kDefaultEmbeddingDim;
};

// Declared here, defined in embedding_remote.hpp so that code which never
// touches the network does not pull in the HTTP client.
class RemoteEmbedder;

}  // namespace phenorag
