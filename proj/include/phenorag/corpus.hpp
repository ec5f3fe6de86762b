#pragma once

// Knowledge-base ingest and chunking: structured phenotype records and
// narrative disease texts in, token-budgeted chunks out.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "phenorag/errors.hpp"
#include "phenorag/tokenize.hpp"

namespace phenorag {

enum class DocSource { HPO_RECORD, OMIM_TEXT };

inline std::string to_string(DocSource s) {
    return s == DocSource::HPO_RECORD ? "HPO_RECORD" : "OMIM_TEXT";
}

inline DocSource doc_source_from_string(std::string_view s) {
    if (s == "HPO_RECORD") return DocSource::HPO_RECORD;
    if (s == "OMIM_TEXT") return DocSource::OMIM_TEXT;
    throw ParseError("unknown doc source: " + std::string(s));
}

enum class Sex { MALE, FEMALE, ANY };

struct KnowledgeDoc {
    std::string doc_id;
    DocSource source = DocSource::OMIM_TEXT;
    std::string disease_name;                 // may be empty for OMIM_TEXT
    std::vector<std::string> gene_symbols;    // uppercased
    std::string typical_age;                  // optional, empty when absent
    Sex sex = Sex::ANY;
    bool has_sex = false;
    // Ordered: preserves input ordering of organ-system blocks.
    std::vector<std::pair<std::string, std::vector<std::string>>> phenotypes_by_system;
    std::string body_text;
};

struct Chunk {
    std::string chunk_id;  // doc_id + ordinal
    std::string doc_id;
    DocSource source = DocSource::OMIM_TEXT;
    std::string text;
    std::size_t token_count = 0;
    std::size_t ordinal = 0;
};

struct CorpusStats {
    std::size_t total_chunks = 0;
    std::map<std::string, std::size_t> per_source_chunks;
    double token_count_mean = 0.0;
    double token_count_median = 0.0;
    std::size_t min_tokens = 0;
    std::size_t max_tokens = 0;
    std::map<std::size_t, std::size_t> histogram;  // bucket lower bound -> count
    std::size_t histogram_bucket_width = 32;
};

namespace detail {

inline std::string uppercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && WordPunctTokenizer::is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && WordPunctTokenizer::is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_gene_field(std::string_view field) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= field.size()) {
        std::size_t slash = field.find('/', start);
        std::string_view part = field.substr(start, slash == std::string_view::npos ? std::string_view::npos
                                                                                    : slash - start);
        std::string sym = uppercase(trim(part));
        if (!sym.empty()) out.push_back(std::move(sym));
        if (slash == std::string_view::npos) break;
        start = slash + 1;
    }
    return out;
}

}  // namespace detail

// --- ingest: HPO records (one JSON object per line) ---

inline KnowledgeDoc parse_hpo_record(const std::string& raw, const std::string& doc_id = "hpo-0",
                                     std::size_t line_number = 0) {
    nlohmann::json rec;
    try {
        rec = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid HPO record JSON: ") + e.what(), line_number);
    }
    if (!rec.is_object()) throw ParseError("HPO record is not an object", line_number);

    KnowledgeDoc doc;
    doc.doc_id = doc_id;
    doc.source = DocSource::HPO_RECORD;

    if (!rec.contains("disease_name") || !rec["disease_name"].is_string() ||
        rec["disease_name"].get<std::string>().empty()) {
        throw ParseError("MissingField(disease_name)", line_number);
    }
    doc.disease_name = rec["disease_name"].get<std::string>();

    if (rec.contains("gene_symbols") && rec["gene_symbols"].is_string()) {
        doc.gene_symbols = detail::split_gene_field(rec["gene_symbols"].get<std::string>());
    }
    if (rec.contains("typical_age") && rec["typical_age"].is_string()) {
        doc.typical_age = rec["typical_age"].get<std::string>();
    }
    if (rec.contains("sex") && rec["sex"].is_string()) {
        std::string s = rec["sex"].get<std::string>();
        if (s == "male") doc.sex = Sex::MALE;
        else if (s == "female") doc.sex = Sex::FEMALE;
        else if (s == "any") doc.sex = Sex::ANY;
        else throw ParseError("MalformedSystemBlock: unknown sex value '" + s + "'", line_number);
        doc.has_sex = true;
    }
    if (rec.contains("systems")) {
        if (!rec["systems"].is_array()) throw ParseError("MalformedSystemBlock: systems is not a list", line_number);
        for (const auto& block : rec["systems"]) {
            if (!block.is_object() || !block.contains("system") || !block["system"].is_string() ||
                !block.contains("terms") || !block["terms"].is_array()) {
                throw ParseError("MalformedSystemBlock", line_number);
            }
            std::vector<std::string> terms;
            for (const auto& t : block["terms"]) {
                if (!t.is_string()) throw ParseError("MalformedSystemBlock: non-string term", line_number);
                terms.push_back(t.get<std::string>());
            }
            doc.phenotypes_by_system.emplace_back(block["system"].get<std::string>(), std::move(terms));
        }
    }
    if (rec.contains("description") && rec["description"].is_string()) {
        doc.body_text = rec["description"].get<std::string>();
    }

    bool any_term = false;
    for (const auto& [sys, terms] : doc.phenotypes_by_system) any_term = any_term || !terms.empty();
    if (!any_term) throw ParseError("MissingField(phenotype terms)", line_number);
    return doc;
}

inline std::vector<KnowledgeDoc> parse_hpo_file(std::istream& in, const std::string& id_prefix = "hpo") {
    std::vector<KnowledgeDoc> docs;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (detail::trim(line).empty()) continue;
        docs.push_back(parse_hpo_record(line, id_prefix + "-" + std::to_string(line_number), line_number));
    }
    return docs;
}

// --- ingest: OMIM texts (`#OMIM <accession> <title>` headers) ---

inline std::vector<KnowledgeDoc> parse_omim_text(const std::string& raw) {
    std::vector<KnowledgeDoc> docs;
    std::istringstream in(raw);
    std::string line;
    std::size_t line_number = 0;
    bool seen_header = false;
    KnowledgeDoc current;
    std::string body;
    std::size_t header_line = 0;

    auto flush = [&]() {
        current.body_text = detail::trim(body);
        if (current.body_text.empty()) throw ParseError("EmptyBody", header_line);
        docs.push_back(current);
        body.clear();
    };

    while (std::getline(in, line)) {
        ++line_number;
        if (line.rfind("#OMIM", 0) == 0) {
            if (seen_header) flush();
            seen_header = true;
            header_line = line_number;
            std::string rest = detail::trim(line.substr(5));
            std::size_t sp = rest.find_first_of(" \t");
            std::string accession = sp == std::string::npos ? rest : rest.substr(0, sp);
            if (accession.empty()) throw ParseError("MissingHeader: no accession", line_number);
            current = KnowledgeDoc{};
            current.doc_id = "omim-" + accession;
            current.source = DocSource::OMIM_TEXT;
            current.disease_name = sp == std::string::npos ? "" : detail::trim(rest.substr(sp));
        } else {
            if (!seen_header) {
                if (!detail::trim(line).empty()) throw ParseError("MissingHeader", line_number);
                continue;
            }
            body += line;
            body += '\n';
        }
    }
    if (!seen_header) throw ParseError("MissingHeader: no #OMIM header found");
    flush();
    return docs;
}

// --- chunking ---

// Renders the text that chunking and retrieval operate on. OMIM docs pass
// through; HPO records render their structured fields in input order,
// mirroring the source record layout.
inline std::string render_doc_text(const KnowledgeDoc& doc) {
    if (doc.source == DocSource::OMIM_TEXT) return doc.body_text;
    std::ostringstream out;
    out << "Disease: " << doc.disease_name << "\n";
    if (!doc.gene_symbols.empty()) {
        out << "Genes: ";
        for (std::size_t i = 0; i < doc.gene_symbols.size(); ++i) {
            if (i) out << "/";
            out << doc.gene_symbols[i];
        }
        out << "\n";
    }
    if (!doc.typical_age.empty()) out << "Typical age: " << doc.typical_age << "\n";
    if (doc.has_sex) {
        out << "Sex: " << (doc.sex == Sex::MALE ? "male" : doc.sex == Sex::FEMALE ? "female" : "any") << "\n";
    }
    for (const auto& [system, terms] : doc.phenotypes_by_system) {
        out << system << ": ";
        for (std::size_t i = 0; i < terms.size(); ++i) {
            if (i) out << "; ";
            out << terms[i];
        }
        out << "\n";
    }
    if (!doc.body_text.empty()) out << "\n" << doc.body_text << "\n";
    return out.str();
}

namespace detail {

// Split levels, coarsest first: blank line, sentence end, whitespace,
// token boundary. Every split point lands on a boundary the tokenizer
// already respects, so chunk token counts stay additive.
enum class SplitLevel { PARAGRAPH, SENTENCE, WORD, TOKEN };

// Contiguous slices covering the input; separators stay attached to the
// preceding slice so concatenation reproduces the input byte for byte.
inline std::vector<std::string_view> split_at(std::string_view text, SplitLevel level) {
    std::vector<std::string_view> out;
    const std::size_t n = text.size();
    if (level == SplitLevel::TOKEN) {
        auto spans = WordPunctTokenizer::spans(text);
        std::size_t prev = 0;
        for (std::size_t i = 0; i + 1 < spans.size(); ++i) {
            out.push_back(text.substr(prev, spans[i].end - prev));
            prev = spans[i].end;
        }
        out.push_back(text.substr(prev));
        return out;
    }

    std::size_t start = 0;
    std::size_t i = 0;
    while (i < n) {
        bool boundary = false;
        std::size_t boundary_end = i;
        if (level == SplitLevel::PARAGRAPH) {
            // A blank line: newline, optional horizontal space, newline.
            if (text[i] == '\n') {
                std::size_t j = i + 1;
                while (j < n && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
                if (j < n && text[j] == '\n') {
                    while (j < n && WordPunctTokenizer::is_space(static_cast<unsigned char>(text[j]))) ++j;
                    boundary = true;
                    boundary_end = j;
                }
            }
        } else if (level == SplitLevel::SENTENCE) {
            if ((text[i] == '.' || text[i] == '!' || text[i] == '?') && i + 1 < n &&
                WordPunctTokenizer::is_space(static_cast<unsigned char>(text[i + 1]))) {
                std::size_t j = i + 1;
                while (j < n && WordPunctTokenizer::is_space(static_cast<unsigned char>(text[j]))) ++j;
                boundary = true;
                boundary_end = j;
            }
        } else {  // WORD
            if (WordPunctTokenizer::is_space(static_cast<unsigned char>(text[i]))) {
                std::size_t j = i;
                while (j < n && WordPunctTokenizer::is_space(static_cast<unsigned char>(text[j]))) ++j;
                boundary = true;
                boundary_end = j;
            }
        }
        if (boundary) {
            out.push_back(text.substr(start, boundary_end - start));
            start = boundary_end;
            i = boundary_end;
        } else {
            ++i;
        }
    }
    if (start < n) out.push_back(text.substr(start));
    return out;
}

// Recursively reduces text to slices that each fit the token budget.
inline void atomize(std::string_view text, std::size_t budget, const Tokenizer& tok, SplitLevel level,
                    std::vector<std::string_view>& out) {
    if (tok.count(text) <= budget) {
        out.push_back(text);
        return;
    }
    auto parts = split_at(text, level);
    if (parts.size() <= 1 && level == SplitLevel::TOKEN) {
        // Single token larger than the budget cannot happen with a
        // word/punct tokenizer, but keep a hard cut as the terminal case.
        out.push_back(text);
        return;
    }
    SplitLevel next = level == SplitLevel::PARAGRAPH ? SplitLevel::SENTENCE
                      : level == SplitLevel::SENTENCE ? SplitLevel::WORD
                                                      : SplitLevel::TOKEN;
    for (std::string_view part : parts) {
        if (tok.count(part) <= budget) {
            out.push_back(part);
        } else if (parts.size() == 1) {
            atomize(part, budget, tok, next, out);
        } else {
            atomize(part, budget, tok, level == SplitLevel::TOKEN ? SplitLevel::TOKEN : next, out);
        }
    }
}

inline std::string rtrim(std::string_view s) {
    std::size_t e = s.size();
    while (e > 0 && WordPunctTokenizer::is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(0, e));
}

}  // namespace detail

inline std::vector<Chunk> chunk_document(const KnowledgeDoc& doc, std::size_t chunk_size = 512,
                                         const Tokenizer& tok = default_tokenizer()) {
    if (chunk_size < 16) throw Error("chunk_size must be >= 16");
    const std::string text = render_doc_text(doc);
    if (detail::trim(text).empty()) throw EmptyInput("document has no text: " + doc.doc_id);

    std::vector<std::string_view> atoms;
    detail::atomize(text, chunk_size, tok, detail::SplitLevel::PARAGRAPH, atoms);

    // Greedy packing at atom granularity: atoms are contiguous, so a chunk
    // is just the slice spanning its first and last atom.
    std::vector<Chunk> chunks;
    const char* base = text.data();
    std::size_t chunk_begin = std::string_view::npos;
    std::size_t chunk_end = 0;
    std::size_t chunk_tokens = 0;

    auto emit = [&]() {
        if (chunk_begin == std::string_view::npos) return;
        std::string_view slice(base + chunk_begin, chunk_end - chunk_begin);
        Chunk c;
        c.doc_id = doc.doc_id;
        c.source = doc.source;
        c.ordinal = chunks.size();
        c.chunk_id = doc.doc_id + "#" + std::to_string(c.ordinal);
        c.text = detail::rtrim(slice);
        c.token_count = tok.count(c.text);
        if (c.token_count > 0) chunks.push_back(std::move(c));
        chunk_begin = std::string_view::npos;
        chunk_tokens = 0;
    };

    for (std::string_view atom : atoms) {
        std::size_t atom_tokens = tok.count(atom);
        if (atom_tokens == 0) {
            // Whitespace-only atom: fold into the open chunk if any.
            if (chunk_begin != std::string_view::npos) chunk_end = (atom.data() - base) + atom.size();
            continue;
        }
        if (chunk_begin != std::string_view::npos && chunk_tokens + atom_tokens > chunk_size) emit();
        if (chunk_begin == std::string_view::npos) chunk_begin = atom.data() - base;
        chunk_end = (atom.data() - base) + atom.size();
        chunk_tokens += atom_tokens;
    }
    emit();

    // Re-assign ordinals in case whitespace-only atoms produced gaps.
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        chunks[i].ordinal = i;
        chunks[i].chunk_id = doc.doc_id + "#" + std::to_string(i);
    }
    return chunks;
}

// --- statistics ---

inline CorpusStats compute_corpus_stats(const std::vector<Chunk>& chunks, std::size_t bucket_width = 32) {
    if (chunks.empty()) throw EmptyCorpus("no chunks");
    CorpusStats stats;
    stats.total_chunks = chunks.size();
    stats.histogram_bucket_width = bucket_width;

    std::vector<std::size_t> counts;
    counts.reserve(chunks.size());
    long double sum = 0;
    for (const Chunk& c : chunks) {
        counts.push_back(c.token_count);
        sum += static_cast<long double>(c.token_count);
        stats.per_source_chunks[to_string(c.source)]++;
        stats.histogram[(c.token_count / bucket_width) * bucket_width]++;
    }
    std::sort(counts.begin(), counts.end());
    stats.min_tokens = counts.front();
    stats.max_tokens = counts.back();
    stats.token_count_mean = static_cast<double>(sum / counts.size());
    std::size_t mid = counts.size() / 2;
    stats.token_count_median = counts.size() % 2 ? static_cast<double>(counts[mid])
                                                 : (static_cast<double>(counts[mid - 1]) + counts[mid]) / 2.0;
    return stats;
}

// --- chunk store persistence ---

inline constexpr const char* kChunkStoreHeader = "PHENORAG-CHUNKS v1";

inline void save_chunk_store(const std::vector<Chunk>& chunks, std::ostream& out) {
    out << kChunkStoreHeader << "\n";
    for (const Chunk& c : chunks) {
        nlohmann::json j{{"chunk_id", c.chunk_id}, {"doc_id", c.doc_id},     {"source", to_string(c.source)},
                         {"text", c.text},         {"token_count", c.token_count}, {"ordinal", c.ordinal}};
        out << j.dump() << "\n";
    }
}

inline std::vector<Chunk> load_chunk_store(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kChunkStoreHeader) {
        throw ParseError(std::string("bad chunk store header, expected '") + kChunkStoreHeader + "'");
    }
    std::vector<Chunk> chunks;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad chunk record: ") + e.what(), line_number);
        }
        Chunk c;
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.doc_id = j.at("doc_id").get<std::string>();
        c.source = doc_source_from_string(j.at("source").get<std::string>());
        c.text = j.at("text").get<std::string>();
        c.token_count = j.at("token_count").get<std::size_t>();
        c.ordinal = j.at("ordinal").get<std::size_t>();
        chunks.push_back(std::move(c));
    }
    return chunks;
}

}  // namespace phenorag
