#pragma once

// Orchestration of the five inference strategies over one clinical note,
// plus the model-output grammar (prediction lists, step-wise reasoning).

#include <array>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "phenorag/corpus.hpp"
#include "phenorag/embedding.hpp"
#include "phenorag/errors.hpp"
#include "phenorag/llm.hpp"
#include "phenorag/promptkit.hpp"
#include "phenorag/retrieval.hpp"

namespace phenorag {

enum class NoteDataset { PHENOPACKET_DERIVED, PUBMED_FREETEXT, INHOUSE, CUSTOM };

inline std::string to_string(NoteDataset d) {
    switch (d) {
        case NoteDataset::PHENOPACKET_DERIVED: return "phenopacket";
        case NoteDataset::PUBMED_FREETEXT: return "pubmed";
        case NoteDataset::INHOUSE: return "inhouse";
        case NoteDataset::CUSTOM: return "custom";
    }
    return "custom";
}

inline NoteDataset dataset_from_string(std::string_view s) {
    if (s == "phenopacket") return NoteDataset::PHENOPACKET_DERIVED;
    if (s == "pubmed") return NoteDataset::PUBMED_FREETEXT;
    if (s == "inhouse") return NoteDataset::INHOUSE;
    return NoteDataset::CUSTOM;
}

struct ClinicalNote {
    std::string note_id;
    std::string text;
    NoteDataset dataset = NoteDataset::CUSTOM;
    std::string truth_gene;     // empty when absent
    std::string truth_disease;  // empty when absent
    std::string demographics;   // optional free text
};

enum class RunEvent { RETRIEVE, LLM_CALL };

inline std::string to_string(RunEvent e) { return e == RunEvent::RETRIEVE ? "retrieve" : "llm_call"; }

struct Prediction {
    std::string note_id;
    Task task = Task::GENE;
    Strategy strategy = Strategy::BASE;
    std::vector<std::string> items;  // deduplicated, at most 10
    std::string reasoning_text;      // empty for BASE/RAG
    std::vector<RetrievalResult> retrieval_trace;
    int llm_calls = 0;
    bool degraded = false;                  // lenient parse recovered < 10 items
    bool retrieval_query_fallback = false;  // COT_RAG fell back to the raw note as query
    std::vector<RunEvent> events;
};

struct CotReasoning {
    std::array<std::string, 5> step_texts;
    // Categories restricted to the 23-entry taxonomy plus "Unclassified".
    std::map<std::string, std::vector<std::string>> extracted_terms;
    std::string full_text;
};

// --- model-output parsing ---

namespace detail {

inline std::string dedupe_key(std::string_view item) {
    std::string key = trim(item);
    for (char& c : key) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return key;
}

}  // namespace detail

struct ParsedList {
    std::vector<std::string> items;
    bool degraded = false;
};

// Strict pass: the marker followed by exactly 10 numbered single-quoted
// entries. Lenient pass on failure: any numbered quoted entries after the
// marker (or anywhere when the marker is missing), 1-10 accepted. Items are
// deduplicated preserving first occurrence and never re-padded.
inline ParsedList parse_prediction_list(const std::string& text, Task task, std::size_t list_length = 10) {
    const std::string marker = prediction_marker(task);
    // Last occurrence: responses may echo the template's format example.
    std::size_t marker_pos = text.rfind(marker);
    std::string_view tail = marker_pos == std::string::npos
                                ? std::string_view(text)
                                : std::string_view(text).substr(marker_pos + marker.size());

    static const std::regex entry_re(R"((\d+)\.\s*'([^'\n]*)')");

    std::vector<std::string> raw;
    bool strict_ok = false;
    if (marker_pos != std::string::npos) {
        // Strict: consecutive entries 1..N with nothing but whitespace in
        // between, starting right after the marker.
        auto begin = tail.begin();
        std::vector<std::string> strict_items;
        std::cregex_iterator it(tail.data(), tail.data() + tail.size(), entry_re), end;
        std::size_t cursor = 0;
        bool broken = false;
        std::size_t expected = 1;
        for (; it != end && expected <= list_length; ++it, ++expected) {
            const auto& m = *it;
            std::string_view gap = tail.substr(cursor, m.position(0) - cursor);
            if (gap.find_first_not_of(" \t\r\n") != std::string_view::npos) {
                broken = true;
                break;
            }
            if (static_cast<std::size_t>(std::stoul(m[1].str())) != expected) {
                broken = true;
                break;
            }
            strict_items.push_back(m[2].str());
            cursor = m.position(0) + m.length(0);
        }
        (void)begin;
        if (!broken && strict_items.size() == list_length) {
            raw = std::move(strict_items);
            strict_ok = true;
        }
    }
    if (!strict_ok) {
        std::cregex_iterator it(tail.data(), tail.data() + tail.size(), entry_re), end;
        for (; it != end && raw.size() < list_length; ++it) {
            std::string item = detail::trim((*it)[2].str());
            if (!item.empty()) raw.push_back(std::move(item));
        }
    }

    ParsedList out;
    std::set<std::string> seen;
    for (std::string& item : raw) {
        std::string trimmed = detail::trim(item);
        if (trimmed.empty()) continue;
        if (!seen.insert(detail::dedupe_key(trimmed)).second) continue;
        out.items.push_back(std::move(trimmed));
        if (out.items.size() == list_length) break;
    }
    if (out.items.empty()) {
        throw ParseFailure("no prediction entries recoverable after marker '" + marker + "'", text);
    }
    out.degraded = out.items.size() < list_length;
    return out;
}

// Parses the REASONING block and the organ-system term map from Step 1.
// Total: an unparseable response yields an empty reasoning, never throws.
inline CotReasoning parse_cot_reasoning(const std::string& text) {
    CotReasoning out;
    std::size_t start = text.find("REASONING:");
    if (start == std::string::npos) return out;
    std::size_t body_start = start + std::string("REASONING:").size();

    // Reasoning runs until the prediction marker if present.
    std::size_t stop = text.find("POTENTIAL_GENES:", body_start);
    if (stop == std::string::npos) stop = text.find("POTENTIAL_DISEASES:", body_start);
    if (stop == std::string::npos) stop = text.size();
    std::string body = text.substr(body_start, stop - body_start);
    out.full_text = detail::trim(body);

    std::array<std::size_t, 6> step_pos;
    step_pos.fill(std::string::npos);
    for (int step = 1; step <= 5; ++step) {
        std::string tag = "Step " + std::to_string(step) + ":";
        step_pos[step - 1] = body.find(tag);
    }
    step_pos[5] = body.size();
    for (int step = 1; step <= 5; ++step) {
        std::size_t begin = step_pos[step - 1];
        if (begin == std::string::npos) continue;
        begin += std::string("Step N:").size();
        std::size_t end = body.size();
        for (int later = step; later < 5; ++later) {
            if (step_pos[later] != std::string::npos) {
                end = step_pos[later];
                break;
            }
        }
        out.step_texts[step - 1] = detail::trim(body.substr(begin, end - begin));
    }

    // Step 1 term extraction: "Category: term1, term2" lines/segments.
    const std::string& step1 = out.step_texts[0];
    std::istringstream lines(step1);
    std::string line;
    while (std::getline(lines, line)) {
        std::size_t colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string label = detail::trim(line.substr(0, colon));
        // Strip list bullets and emphasis markers around the label.
        while (!label.empty() && (label.front() == '-' || label.front() == '*' || label.front() == '[' ||
                                  WordPunctTokenizer::is_space(static_cast<unsigned char>(label.front())))) {
            label.erase(label.begin());
        }
        while (!label.empty() && (label.back() == '*' || label.back() == ']')) label.pop_back();
        label = detail::trim(label);
        if (label.empty()) continue;

        std::string canonical = "Unclassified";
        for (std::string_view cat : organ_system_taxonomy()) {
            if (detail::dedupe_key(label) == detail::dedupe_key(cat)) {
                canonical = std::string(cat);
                break;
            }
        }
        if (canonical == "Unclassified" && label.find(' ') == std::string::npos &&
            label.size() > 24) {
            continue;  // unlikely to be a category label
        }

        std::string terms_part = line.substr(colon + 1);
        std::size_t start_pos = 0;
        while (start_pos <= terms_part.size()) {
            std::size_t sep = terms_part.find_first_of(",;", start_pos);
            std::string term = detail::trim(sep == std::string::npos ? terms_part.substr(start_pos)
                                                                     : terms_part.substr(start_pos, sep - start_pos));
            if (!term.empty()) out.extracted_terms[canonical].push_back(term);
            if (sep == std::string::npos) break;
            start_pos = sep + 1;
        }
    }
    return out;
}

// Retrieval query for the CoT-first hybrid: "System: term" pairs from
// Step 1, in taxonomy order, space-joined. Empty extraction falls back to
// the raw note text.
inline std::string extract_rag_query(const CotReasoning& reasoning, const ClinicalNote& note) {
    std::string query;
    auto append_terms = [&](const std::string& category) {
        auto it = reasoning.extracted_terms.find(category);
        if (it == reasoning.extracted_terms.end()) return;
        for (const std::string& term : it->second) {
            if (!query.empty()) query += " ";
            query += category + ": " + term;
        }
    };
    for (std::string_view cat : organ_system_taxonomy()) append_terms(std::string(cat));
    append_terms("Unclassified");
    return query.empty() ? note.text : query;
}

// --- strategy runners ---

struct PipelineConfig {
    std::size_t chunk_size = 512;
    std::size_t dense_k = 3;
    std::size_t rerank_keep = 1;
    std::size_t context_window = 2048;
    std::size_t list_length = 10;
    std::string model_id = "mock";
    TemplateSet templates;
};

struct RagResources {
    const DenseIndex* index = nullptr;
    const ChunkStore* store = nullptr;
    const Embedder* embedder = nullptr;
};

namespace detail {

inline ChatResponse call_llm(ChatClient& llm, const PromptBundle& bundle, const PipelineConfig& cfg,
                             const ClinicalNote& note, Prediction& pred) {
    ChatRequest req;
    req.system = bundle.system_message;
    req.user = bundle.user_message;
    req.model_id = cfg.model_id;
    req.request_id = note.note_id + "/" + to_string(pred.strategy) + "/" + std::to_string(pred.llm_calls + 1);
    ChatResponse resp = llm.complete(req);
    ++pred.llm_calls;
    pred.events.push_back(RunEvent::LLM_CALL);
    return resp;
}

inline std::vector<std::pair<std::string, std::string>> context_chunks_for(
    const std::vector<RetrievalResult>& results, const ChunkStore& store) {
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(results.size());
    for (const RetrievalResult& r : results) out.emplace_back(store.at(r.chunk_id).text, r.chunk_id);
    return out;
}

inline void finish(Prediction& pred, const std::string& response_text, const PipelineConfig& cfg) {
    ParsedList parsed = parse_prediction_list(response_text, pred.task, cfg.list_length);
    pred.items = std::move(parsed.items);
    pred.degraded = parsed.degraded;
}

}  // namespace detail

inline Prediction run_base(const ClinicalNote& note, Task task, ChatClient& llm,
                           const PipelineConfig& cfg = {}) {
    Prediction pred;
    pred.note_id = note.note_id;
    pred.task = task;
    pred.strategy = Strategy::BASE;
    PromptBundle bundle = assemble_base_prompt(note.text, task, cfg.templates, cfg.context_window);
    ChatResponse resp = detail::call_llm(llm, bundle, cfg, note, pred);
    detail::finish(pred, resp.text, cfg);
    return pred;
}

inline Prediction run_cot(const ClinicalNote& note, Task task, ChatClient& llm,
                          const PipelineConfig& cfg = {}) {
    Prediction pred;
    pred.note_id = note.note_id;
    pred.task = task;
    pred.strategy = Strategy::COT;
    PromptBundle bundle = assemble_cot_prompt(note.text, task, cfg.templates, cfg.context_window);
    ChatResponse resp = detail::call_llm(llm, bundle, cfg, note, pred);
    try {
        detail::finish(pred, resp.text, cfg);
    } catch (ParseFailure&) {
        // Keep the reasoning in the error payload.
        CotReasoning reasoning = parse_cot_reasoning(resp.text);
        throw ParseFailure("CoT response has no prediction list", reasoning.full_text);
    }
    pred.reasoning_text = parse_cot_reasoning(resp.text).full_text;
    return pred;
}

inline Prediction run_rag(const ClinicalNote& note, Task task, ChatClient& llm, const RagResources& rag,
                          const PipelineConfig& cfg = {}) {
    Prediction pred;
    pred.note_id = note.note_id;
    pred.task = task;
    pred.strategy = Strategy::RAG;
    // Retrieval first; an empty index must fail before any LLM call.
    pred.retrieval_trace = two_stage_retrieve(*rag.index, *rag.store, *rag.embedder, note.text, cfg.dense_k,
                                              cfg.rerank_keep, cfg.chunk_size);
    pred.events.push_back(RunEvent::RETRIEVE);
    PromptBundle bundle = assemble_base_prompt(note.text, task, cfg.templates, cfg.context_window);
    bundle = inject_context(std::move(bundle), detail::context_chunks_for(pred.retrieval_trace, *rag.store),
                            cfg.context_window);
    ChatResponse resp = detail::call_llm(llm, bundle, cfg, note, pred);
    detail::finish(pred, resp.text, cfg);
    return pred;
}

inline Prediction run_rag_driven_cot(const ClinicalNote& note, Task task, ChatClient& llm,
                                     const RagResources& rag, const PipelineConfig& cfg = {}) {
    Prediction pred;
    pred.note_id = note.note_id;
    pred.task = task;
    pred.strategy = Strategy::RAG_COT;
    // Query is the raw note; retrieval strictly precedes the single call.
    pred.retrieval_trace = two_stage_retrieve(*rag.index, *rag.store, *rag.embedder, note.text, cfg.dense_k,
                                              cfg.rerank_keep, cfg.chunk_size);
    pred.events.push_back(RunEvent::RETRIEVE);
    PromptBundle bundle = assemble_cot_prompt(note.text, task, cfg.templates, cfg.context_window);
    bundle = inject_context(std::move(bundle), detail::context_chunks_for(pred.retrieval_trace, *rag.store),
                            cfg.context_window);
    ChatResponse resp = detail::call_llm(llm, bundle, cfg, note, pred);
    detail::finish(pred, resp.text, cfg);
    pred.reasoning_text = parse_cot_reasoning(resp.text).full_text;
    return pred;
}

inline Prediction run_cot_driven_rag(const ClinicalNote& note, Task task, ChatClient& llm,
                                     const RagResources& rag, const PipelineConfig& cfg = {}) {
    if (rag.index->entries.empty()) throw EmptyIndex("cot-rag: empty index");
    Prediction pred;
    pred.note_id = note.note_id;
    pred.task = task;
    pred.strategy = Strategy::COT_RAG;

    // Call 1: reasoning pass with the plain CoT prompt.
    PromptBundle first = assemble_cot_prompt(note.text, task, cfg.templates, cfg.context_window);
    ChatResponse reasoning_resp = detail::call_llm(llm, first, cfg, note, pred);
    CotReasoning reasoning = parse_cot_reasoning(reasoning_resp.text);

    std::string query = extract_rag_query(reasoning, note);
    pred.retrieval_query_fallback = reasoning.extracted_terms.empty();

    pred.retrieval_trace = two_stage_retrieve(*rag.index, *rag.store, *rag.embedder, query, cfg.dense_k,
                                              cfg.rerank_keep, cfg.chunk_size);
    pred.events.push_back(RunEvent::RETRIEVE);

    // Call 2: finalize with the retrieved context and the prior reasoning.
    PromptBundle second = assemble_finalize_prompt(
        note.text, task, reasoning.full_text.empty() ? reasoning_resp.text : reasoning.full_text,
        cfg.templates, cfg.context_window);
    second = inject_context(std::move(second), detail::context_chunks_for(pred.retrieval_trace, *rag.store),
                            cfg.context_window);
    ChatResponse final_resp = detail::call_llm(llm, second, cfg, note, pred);
    detail::finish(pred, final_resp.text, cfg);
    pred.reasoning_text = reasoning.full_text;
    return pred;
}

inline Prediction run_strategy(Strategy strategy, const ClinicalNote& note, Task task, ChatClient& llm,
                               const RagResources& rag, const PipelineConfig& cfg = {}) {
    switch (strategy) {
        case Strategy::BASE: return run_base(note, task, llm, cfg);
        case Strategy::COT: return run_cot(note, task, llm, cfg);
        case Strategy::RAG: return run_rag(note, task, llm, rag, cfg);
        case Strategy::RAG_COT: return run_rag_driven_cot(note, task, llm, rag, cfg);
        case Strategy::COT_RAG: return run_cot_driven_rag(note, task, llm, rag, cfg);
    }
    throw Error("unknown strategy");
}

}  // namespace phenorag
