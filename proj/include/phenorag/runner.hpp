#pragma once

// Batch runner: executes one strategy over a dataset with a bounded worker
// pool, writing one prediction record per note in input order. Output is
// JSONL with a header record carrying the resolved config.

#include <fstream>
#include <future>
#include <optional>
#include <semaphore>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "phenorag/config.hpp"
#include "phenorag/evalharness.hpp"
#include "phenorag/llm.hpp"
#include "phenorag/pipeline.hpp"
#include "phenorag/retrieval.hpp"

namespace phenorag {

inline nlohmann::json prediction_to_json(const Prediction& p) {
    nlohmann::json trace = nlohmann::json::array();
    for (const RetrievalResult& r : p.retrieval_trace) {
        nlohmann::json t{{"chunk_id", r.chunk_id},
                         {"dense_score", r.dense_score},
                         {"dense_rank", r.dense_rank},
                         {"final_rank", r.final_rank}};
        if (r.rerank_score) t["rerank_score"] = *r.rerank_score;
        trace.push_back(std::move(t));
    }
    nlohmann::json events = nlohmann::json::array();
    for (RunEvent e : p.events) events.push_back(to_string(e));
    return nlohmann::json{{"note_id", p.note_id},
                          {"task", to_string(p.task)},
                          {"strategy", to_string(p.strategy)},
                          {"items", p.items},
                          {"reasoning_text", p.reasoning_text},
                          {"retrieval_trace", std::move(trace)},
                          {"llm_calls", p.llm_calls},
                          {"degraded", p.degraded},
                          {"retrieval_query_fallback", p.retrieval_query_fallback},
                          {"events", std::move(events)}};
}

struct PredictionRecord {
    std::string note_id;
    Task task = Task::GENE;
    Strategy strategy = Strategy::BASE;
    std::optional<Prediction> prediction;  // absent on parse failure
    std::string error;
};

struct BatchResult {
    std::size_t processed = 0;
    std::size_t parse_failures = 0;
    std::size_t skipped = 0;  // resume
};

struct BatchOptions {
    Strategy strategy = Strategy::BASE;
    Task task = Task::GENE;
    int jobs = 4;
    std::optional<std::size_t> limit;
    bool resume = false;
};

inline std::set<std::string> completed_note_ids(const std::string& path) {
    std::set<std::string> done;
    std::ifstream in(path);
    if (!in) return done;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            if (j.contains("note_id")) done.insert(j["note_id"].get<std::string>());
        } catch (const nlohmann::json::exception&) {
            continue;
        }
    }
    return done;
}

inline BatchResult run_batch(const std::vector<ClinicalNote>& notes, ChatClient& llm, const RagResources& rag,
                             const RunConfig& run_cfg, const BatchOptions& opts, const std::string& out_path,
                             const TemplateSet& templates = {}) {
    BatchResult result;
    PipelineConfig cfg;
    cfg.chunk_size = run_cfg.chunk_size;
    cfg.dense_k = run_cfg.dense_k;
    cfg.rerank_keep = run_cfg.rerank_keep;
    cfg.context_window = run_cfg.context_window;
    cfg.list_length = run_cfg.list_length;
    cfg.model_id = run_cfg.llm_model.empty() ? "mock" : run_cfg.llm_model;
    cfg.templates = templates;

    std::set<std::string> done;
    if (opts.resume) done = completed_note_ids(out_path);

    // --limit counts notes covered overall, including ones already in the
    // output file from a previous run.
    std::vector<const ClinicalNote*> todo;
    for (const ClinicalNote& note : notes) {
        if (opts.limit && result.skipped + todo.size() >= *opts.limit) break;
        if (done.count(note.note_id)) {
            ++result.skipped;
            continue;
        }
        todo.push_back(&note);
    }

    std::ofstream out(out_path, opts.resume ? std::ios::app : std::ios::trunc);
    if (!out) throw Error("cannot open output file: " + out_path);
    if (!opts.resume || done.empty()) {
        nlohmann::json header{{"header", true},
                              {"strategy", to_string(opts.strategy)},
                              {"task", to_string(opts.task)},
                              {"config", run_cfg.result_relevant_json()}};
        out << header.dump() << "\n";
    }

    // Bounded concurrency; records are written in input order regardless of
    // completion order.
    int jobs = std::max(1, opts.jobs);
    auto sem = std::make_shared<std::counting_semaphore<256>>(std::min(jobs, 256));
    std::vector<std::future<PredictionRecord>> futures;
    futures.reserve(todo.size());
    for (const ClinicalNote* note : todo) {
        futures.push_back(std::async(std::launch::async, [&, note, sem]() {
            sem->acquire();
            PredictionRecord rec;
            rec.note_id = note->note_id;
            rec.task = opts.task;
            rec.strategy = opts.strategy;
            try {
                rec.prediction = run_strategy(opts.strategy, *note, opts.task, llm, rag, cfg);
            } catch (const ParseFailure& e) {
                rec.error = e.what();
            } catch (const UnscriptedPrompt& e) {
                rec.error = e.what();
            }
            sem->release();
            return rec;
        }));
    }

    for (std::future<PredictionRecord>& f : futures) {
        PredictionRecord rec = f.get();
        ++result.processed;
        if (rec.prediction) {
            out << prediction_to_json(*rec.prediction).dump() << "\n";
        } else {
            ++result.parse_failures;
            nlohmann::json j{{"note_id", rec.note_id}, {"task", to_string(rec.task)},
                             {"strategy", to_string(rec.strategy)}, {"error", rec.error}};
            out << j.dump() << "\n";
        }
    }
    return result;
}

// --- predictions file loading (for evaluation) ---

struct PredictionsFile {
    nlohmann::json header;
    std::vector<PredictionRecord> records;
};

inline PredictionsFile load_predictions(std::istream& in) {
    PredictionsFile file;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad predictions record: ") + e.what(), line_number);
        }
        if (j.contains("header") && j["header"].is_boolean() && j["header"].get<bool>()) {
            file.header = j;
            continue;
        }
        PredictionRecord rec;
        rec.note_id = j.at("note_id").get<std::string>();
        rec.task = task_from_string(j.at("task").get<std::string>());
        rec.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        if (j.contains("error")) {
            rec.error = j["error"].get<std::string>();
        } else {
            Prediction p;
            p.note_id = rec.note_id;
            p.task = rec.task;
            p.strategy = rec.strategy;
            p.items = j.at("items").get<std::vector<std::string>>();
            p.reasoning_text = j.value("reasoning_text", "");
            p.llm_calls = j.value("llm_calls", 0);
            p.degraded = j.value("degraded", false);
            rec.prediction = std::move(p);
        }
        file.records.push_back(std::move(rec));
    }
    return file;
}

inline PredictionsFile load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open predictions file: " + path);
    return load_predictions(in);
}

// Scores a predictions file against its dataset. Every note_id in the
// predictions must exist in the dataset. Parse failures count as misses.
inline std::vector<EvalRecord> score_predictions(const PredictionsFile& file,
                                                 const std::vector<ClinicalNote>& dataset,
                                                 const MatchConfig& match_cfg,
                                                 const Embedder* embedder = nullptr) {
    std::map<std::string, const ClinicalNote*> by_id;
    for (const ClinicalNote& note : dataset) by_id[note.note_id] = &note;

    std::vector<EvalRecord> records;
    records.reserve(file.records.size());
    for (const PredictionRecord& rec : file.records) {
        auto it = by_id.find(rec.note_id);
        if (it == by_id.end()) throw Error("prediction note_id not in dataset: " + rec.note_id);
        const ClinicalNote& note = *it->second;
        if (rec.prediction) {
            records.push_back(score_prediction(*rec.prediction, note, make_matcher(rec.task, match_cfg, embedder)));
        } else {
            records.push_back(miss_record(rec.note_id, rec.strategy, rec.task, to_string(note.dataset)));
        }
    }
    return records;
}

}  // namespace phenorag
