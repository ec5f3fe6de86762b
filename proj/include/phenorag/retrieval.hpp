#pragma once

// Two-stage retrieval: flat cosine top-k over chunk embeddings, then
// late-interaction (MaxSim) reranking of the survivors down to one context
// document. Ties break lexicographically by chunk_id everywhere.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "phenorag/corpus.hpp"
#include "phenorag/embedding.hpp"
#include "phenorag/errors.hpp"
#include "phenorag/hash.hpp"

namespace phenorag {

struct RetrievalResult {
    std::string chunk_id;
    double dense_score = 0.0;                 // cosine, [-1, 1]
    std::optional<double> rerank_score;       // MaxSim, nonnegative; absent before rerank
    int dense_rank = 0;                       // 1-based
    int final_rank = 0;                       // 1-based after rerank; 0 before
};

struct DenseIndex {
    struct Entry {
        std::string chunk_id;
        EmbeddingVector vector;
    };
    std::vector<Entry> entries;
    std::size_t dimension = 0;
    std::string build_fingerprint;
};

// Chunk-id keyed view over a chunk list; retrieval needs the survivors'
// text back for token-level re-embedding and context injection.
class ChunkStore {
public:
    ChunkStore() = default;
    explicit ChunkStore(std::vector<Chunk> chunks) : chunks_(std::move(chunks)) {
        for (std::size_t i = 0; i < chunks_.size(); ++i) by_id_[chunks_[i].chunk_id] = i;
    }

    const std::vector<Chunk>& chunks() const { return chunks_; }
    bool empty() const { return chunks_.empty(); }
    std::size_t size() const { return chunks_.size(); }

    const Chunk& at(const std::string& chunk_id) const {
        auto it = by_id_.find(chunk_id);
        if (it == by_id_.end()) throw Error("unknown chunk_id: " + chunk_id);
        return chunks_[it->second];
    }

private:
    std::vector<Chunk> chunks_;
    std::map<std::string, std::size_t> by_id_;
};

inline DenseIndex build_index(const std::vector<Chunk>& chunks, const Embedder& embedder) {
    if (chunks.empty()) throw EmptyCorpus("build_index: no chunks");
    DenseIndex index;
    index.dimension = embedder.dimension();
    index.entries.reserve(chunks.size());

    std::uint64_t fp = fnv1a64(embedder.config_fingerprint());
    for (const Chunk& c : chunks) {
        EmbeddingVector v = embedder.embed_text(c.text);
        if (v.dim() != index.dimension) {
            throw DimensionMismatch("chunk " + c.chunk_id + ": dim " + std::to_string(v.dim()));
        }
        fp = fnv1a64(c.chunk_id, fp);
        fp = fnv1a64(c.text, fp);
        index.entries.push_back({c.chunk_id, std::move(v)});
    }
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << fp;
    index.build_fingerprint = hex.str();
    return index;
}

inline std::vector<RetrievalResult> dense_search(const DenseIndex& index, const EmbeddingVector& query,
                                                 std::size_t k = 3) {
    if (index.entries.empty()) throw EmptyIndex("dense_search: empty index");
    if (k < 1) throw Error("dense_search: k must be >= 1");
    if (query.dim() != index.dimension) {
        throw DimensionMismatch("query dim " + std::to_string(query.dim()) + " != index dim " +
                                std::to_string(index.dimension));
    }

    std::vector<RetrievalResult> results;
    results.reserve(index.entries.size());
    for (const auto& entry : index.entries) {
        RetrievalResult r;
        r.chunk_id = entry.chunk_id;
        r.dense_score = cosine(query, entry.vector);
        results.push_back(std::move(r));
    }
    std::sort(results.begin(), results.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
        if (a.dense_score != b.dense_score) return a.dense_score > b.dense_score;
        return a.chunk_id < b.chunk_id;
    });
    if (results.size() > k) results.resize(k);
    for (std::size_t i = 0; i < results.size(); ++i) results[i].dense_rank = static_cast<int>(i) + 1;
    return results;
}

struct MaxSimOptions {
    // Negative per-token similarities are clamped to zero so the score
    // accumulates nonnegative evidence only.
    bool clamp_negative = true;
};

inline double maxsim_score(const TokenEmbeddings& query, const TokenEmbeddings& candidate,
                           const MaxSimOptions& opts = {}) {
    double total = 0.0;
    for (const EmbeddingVector& q : query.vectors) {
        double best = 0.0;
        bool first = true;
        for (const EmbeddingVector& d : candidate.vectors) {
            double sim = cosine(q, d);
            if (opts.clamp_negative && sim < 0.0) sim = 0.0;
            best = first ? sim : std::max(best, sim);
            first = false;
        }
        total += best;
    }
    return total;
}

inline std::vector<RetrievalResult> maxsim_rerank(
    const TokenEmbeddings& query_tokens,
    const std::vector<std::pair<std::string, TokenEmbeddings>>& candidates, std::size_t keep = 1,
    const MaxSimOptions& opts = {}) {
    if (candidates.empty()) throw EmptyCandidates("maxsim_rerank: no candidates");
    for (const auto& [id, cand] : candidates) {
        for (const EmbeddingVector& v : cand.vectors) {
            if (!query_tokens.vectors.empty() && v.dim() != query_tokens.vectors.front().dim()) {
                throw DimensionMismatch("maxsim_rerank: candidate " + id);
            }
        }
    }

    std::vector<RetrievalResult> results;
    results.reserve(candidates.size());
    for (const auto& [id, cand] : candidates) {
        RetrievalResult r;
        r.chunk_id = id;
        r.rerank_score = maxsim_score(query_tokens, cand, opts);
        results.push_back(std::move(r));
    }
    std::sort(results.begin(), results.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
        if (*a.rerank_score != *b.rerank_score) return *a.rerank_score > *b.rerank_score;
        return a.chunk_id < b.chunk_id;
    });
    if (results.size() > keep) results.resize(keep);
    for (std::size_t i = 0; i < results.size(); ++i) results[i].final_rank = static_cast<int>(i) + 1;
    return results;
}

// Query vector for dense retrieval: notes can exceed the provider's
// sequence limit, so the query is the arithmetic mean of the note's
// per-chunk embeddings, chunked the same way as the knowledge base.
inline EmbeddingVector embed_query(const Embedder& embedder, const std::string& query_text,
                                   std::size_t chunk_size = 512) {
    if (query_text.empty()) throw EmptyInput("embed_query: empty query");
    KnowledgeDoc tmp;
    tmp.doc_id = "query";
    tmp.source = DocSource::OMIM_TEXT;
    tmp.body_text = query_text;
    std::vector<Chunk> pieces = chunk_document(tmp, chunk_size);
    if (pieces.empty()) throw EmptyInput("embed_query: query has no tokens");
    if (pieces.size() == 1) return embedder.embed_text(pieces[0].text);

    std::vector<double> acc(embedder.dimension(), 0.0);
    for (const Chunk& piece : pieces) {
        EmbeddingVector v = embedder.embed_text(piece.text);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v.values[i];
    }
    std::vector<float> mean(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) mean[i] = static_cast<float>(acc[i] / pieces.size());
    return EmbeddingVector::from_values(std::move(mean));
}

inline std::vector<RetrievalResult> two_stage_retrieve(const DenseIndex& index, const ChunkStore& store,
                                                       const Embedder& embedder, const std::string& query_text,
                                                       std::size_t dense_k = 3, std::size_t keep = 1,
                                                       std::size_t chunk_size = 512,
                                                       std::size_t rerank_query_tokens = kDefaultMaxSeqLen) {
    if (query_text.empty()) throw EmptyInput("two_stage_retrieve: empty query");
    EmbeddingVector query = embed_query(embedder, query_text, chunk_size);
    std::vector<RetrievalResult> survivors = dense_search(index, query, dense_k);

    // Query tokens for late interaction: the first `rerank_query_tokens`
    // tokens of the raw query text.
    TokenEmbeddings query_tokens = embedder.embed_tokens(query_text, rerank_query_tokens);

    std::vector<std::pair<std::string, TokenEmbeddings>> candidates;
    candidates.reserve(survivors.size());
    for (const RetrievalResult& s : survivors) {
        candidates.emplace_back(s.chunk_id, embedder.embed_tokens(store.at(s.chunk_id).text));
    }
    std::vector<RetrievalResult> reranked = maxsim_rerank(query_tokens, candidates, keep);

    // Carry both stages' scores on the final results.
    for (RetrievalResult& r : reranked) {
        for (const RetrievalResult& s : survivors) {
            if (s.chunk_id == r.chunk_id) {
                r.dense_score = s.dense_score;
                r.dense_rank = s.dense_rank;
                break;
            }
        }
    }
    return reranked;
}

// --- index persistence ---

inline constexpr const char* kIndexHeader = "PHENORAG-INDEX v1";

inline void save_index(const DenseIndex& index, std::ostream& out) {
    out << kIndexHeader << "\n";
    out << "fingerprint " << index.build_fingerprint << "\n";
    out << "dimension " << index.dimension << "\n";
    out << std::setprecision(9);
    for (const auto& entry : index.entries) {
        out << entry.chunk_id << "\t" << entry.vector.dim();
        for (float v : entry.vector.values) out << " " << v;
        out << "\n";
    }
}

inline DenseIndex load_index(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kIndexHeader) {
        throw ParseError(std::string("bad index header, expected '") + kIndexHeader + "'");
    }
    DenseIndex index;
    std::string word;
    if (!std::getline(in, line)) throw ParseError("index missing fingerprint line");
    {
        std::istringstream ls(line);
        ls >> word >> index.build_fingerprint;
        if (word != "fingerprint") throw ParseError("index missing fingerprint line");
    }
    if (!std::getline(in, line)) throw ParseError("index missing dimension line");
    {
        std::istringstream ls(line);
        ls >> word >> index.dimension;
        if (word != "dimension") throw ParseError("index missing dimension line");
    }
    std::size_t line_number = 3;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("index record missing tab", line_number);
        DenseIndex::Entry entry;
        entry.chunk_id = line.substr(0, tab);
        std::istringstream ls(line.substr(tab + 1));
        std::size_t dim = 0;
        ls >> dim;
        if (dim != index.dimension) throw DimensionMismatch("index record dim mismatch at line " + std::to_string(line_number));
        std::vector<float> values(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            if (!(ls >> values[i])) throw ParseError("index record truncated", line_number);
        }
        entry.vector = EmbeddingVector::from_values(std::move(values));
        index.entries.push_back(std::move(entry));
    }
    return index;
}

}  // namespace phenorag
