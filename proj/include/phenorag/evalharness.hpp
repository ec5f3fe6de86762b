#pragma once

// Evaluation harness: dataset loading, truth matching (exact for genes,
// synonym/semantic for diseases), Top-k accuracy, report emission.

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "phenorag/embedding.hpp"
#include "phenorag/errors.hpp"
#include "phenorag/pipeline.hpp"

namespace phenorag {

struct MatchConfig {
    // Gene matching: uppercase + trim + strip surrounding quotes.
    std::map<std::string, std::vector<std::string>> disease_synonyms;  // canonical -> synonyms
    double semantic_threshold = 0.90;
    bool use_embeddings_for_disease = false;
};

struct EvalRecord {
    std::string note_id;
    Strategy strategy = Strategy::BASE;
    Task task = Task::GENE;
    std::string dataset = "custom";
    std::optional<int> rank_of_truth;  // 1-10; nullopt == ABSENT
    bool top1_hit = false;
    bool top10_hit = false;
    bool degraded = false;
};

struct AccuracyRow {
    std::string dataset;
    Task task = Task::GENE;
    Strategy strategy = Strategy::BASE;
    std::size_t n_cases = 0;
    std::size_t top1_hits = 0;
    std::size_t top10_hits = 0;
    std::size_t parse_failures = 0;
    std::size_t degraded_count = 0;
    double top1_fraction = 0.0;
    double top10_fraction = 0.0;
};

// --- dataset loading ---

inline std::vector<ClinicalNote> load_dataset(std::istream& in) {
    std::vector<ClinicalNote> notes;
    std::string line;
    std::size_t record = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++record;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("invalid dataset JSON: ") + e.what(), record);
        }
        ClinicalNote note;
        if (!j.contains("note_id") || !j["note_id"].is_string()) throw SchemaError("missing note_id", record);
        if (!j.contains("text") || !j["text"].is_string() || j["text"].get<std::string>().empty()) {
            throw SchemaError("missing or empty text", record);
        }
        note.note_id = j["note_id"].get<std::string>();
        note.text = j["text"].get<std::string>();
        if (j.contains("dataset") && j["dataset"].is_string()) {
            note.dataset = dataset_from_string(j["dataset"].get<std::string>());
        }
        if (j.contains("truth_gene") && j["truth_gene"].is_string()) note.truth_gene = j["truth_gene"].get<std::string>();
        if (j.contains("truth_disease") && j["truth_disease"].is_string()) {
            note.truth_disease = j["truth_disease"].get<std::string>();
        }
        if (j.contains("demographics") && j["demographics"].is_string()) {
            note.demographics = j["demographics"].get<std::string>();
        }
        if (note.truth_gene.empty() && note.truth_disease.empty()) {
            throw SchemaError("record has neither truth_gene nor truth_disease", record);
        }
        notes.push_back(std::move(note));
    }
    return notes;
}

inline std::vector<ClinicalNote> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open dataset file: " + path);
    return load_dataset(in);
}

// Dataset-filter utility: keeps at most `cap` notes per truth label, chosen
// with a seeded shuffle for reproducibility.
inline std::vector<ClinicalNote> cap_per_label(std::vector<ClinicalNote> notes, Task task, std::size_t cap,
                                               std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < notes.size(); ++i) {
        const std::string& label = task == Task::GENE ? notes[i].truth_gene : notes[i].truth_disease;
        by_label[label].push_back(i);
    }
    std::set<std::size_t> keep;
    for (auto& [label, idxs] : by_label) {
        // Deterministic Fisher-Yates over the index list.
        std::uint64_t state = seed ^ fnv1a64(label);
        for (std::size_t i = idxs.size(); i > 1; --i) {
            std::size_t j = splitmix64(state) % i;
            std::swap(idxs[i - 1], idxs[j]);
        }
        for (std::size_t i = 0; i < std::min(cap, idxs.size()); ++i) keep.insert(idxs[i]);
    }
    std::vector<ClinicalNote> out;
    for (std::size_t i = 0; i < notes.size(); ++i) {
        if (keep.count(i)) out.push_back(std::move(notes[i]));
    }
    return out;
}

// --- matching ---

inline std::string normalize_gene(std::string_view raw) {
    std::string s = detail::trim(raw);
    while (s.size() >= 2 && ((s.front() == '\'' && s.back() == '\'') || (s.front() == '"' && s.back() == '"'))) {
        s = detail::trim(std::string_view(s).substr(1, s.size() - 2));
    }
    return detail::uppercase(s);
}

inline bool match_gene(std::string_view predicted, std::string_view truth) {
    return normalize_gene(predicted) == normalize_gene(truth);
}

inline std::string fold_case(std::string_view raw) {
    std::string s = detail::trim(raw);
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline bool match_disease(const std::string& predicted, const std::string& truth, const MatchConfig& cfg,
                          const Embedder* embedder = nullptr) {
    std::string p = fold_case(normalize_gene(predicted));  // quote-strip + trim, then case-fold
    std::string t = fold_case(normalize_gene(truth));
    if (p == t) return true;

    // Synonym table: both sides map to the same canonical name.
    auto canonical_of = [&](const std::string& name) -> std::optional<std::string> {
        for (const auto& [canonical, synonyms] : cfg.disease_synonyms) {
            if (fold_case(canonical) == name) return canonical;
            for (const std::string& syn : synonyms) {
                if (fold_case(syn) == name) return canonical;
            }
        }
        return std::nullopt;
    };
    auto cp = canonical_of(p);
    auto ct = canonical_of(t);
    if (cp && ct && *cp == *ct) return true;

    if (cfg.use_embeddings_for_disease) {
        if (!embedder) throw Error("match_disease: embedding path enabled but no embedder given");
        double sim = cosine(embedder->embed_text(predicted), embedder->embed_text(truth));
        return sim >= cfg.semantic_threshold;
    }
    return false;
}

// Matcher signature shared by both tasks.
using Matcher = std::function<bool(const std::string& predicted, const std::string& truth)>;

inline Matcher make_matcher(Task task, const MatchConfig& cfg, const Embedder* embedder = nullptr) {
    if (task == Task::GENE) {
        return [](const std::string& p, const std::string& t) { return match_gene(p, t); };
    }
    return [cfg, embedder](const std::string& p, const std::string& t) {
        return match_disease(p, t, cfg, embedder);
    };
}

inline std::optional<int> rank_of_truth(const Prediction& prediction, const std::string& truth,
                                        const Matcher& matcher) {
    for (std::size_t i = 0; i < prediction.items.size(); ++i) {
        if (matcher(prediction.items[i], truth)) return static_cast<int>(i) + 1;
    }
    return std::nullopt;
}

inline EvalRecord score_prediction(const Prediction& prediction, const ClinicalNote& note,
                                   const Matcher& matcher) {
    EvalRecord rec;
    rec.note_id = prediction.note_id;
    rec.strategy = prediction.strategy;
    rec.task = prediction.task;
    rec.dataset = to_string(note.dataset);
    rec.degraded = prediction.degraded;
    const std::string& truth = prediction.task == Task::GENE ? note.truth_gene : note.truth_disease;
    rec.rank_of_truth = rank_of_truth(prediction, truth, matcher);
    rec.top1_hit = rec.rank_of_truth && *rec.rank_of_truth == 1;
    rec.top10_hit = rec.rank_of_truth && *rec.rank_of_truth <= 10;
    return rec;
}

// Parse failures score as misses: a record with no rank.
inline EvalRecord miss_record(const std::string& note_id, Strategy strategy, Task task,
                              const std::string& dataset) {
    EvalRecord rec;
    rec.note_id = note_id;
    rec.strategy = strategy;
    rec.task = task;
    rec.dataset = dataset;
    return rec;
}

inline double topk_accuracy(const std::vector<EvalRecord>& records, int k) {
    if (records.empty()) throw EmptyRecords("topk_accuracy: no records");
    std::size_t hits = 0;
    for (const EvalRecord& r : records) {
        if (r.rank_of_truth && *r.rank_of_truth <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

// --- reporting ---

enum class ReportFormat { TABLE, JSON, CSV };

inline std::vector<AccuracyRow> aggregate(const std::vector<EvalRecord>& records,
                                          const std::map<std::string, std::size_t>& parse_failures = {}) {
    if (records.empty()) throw EmptyRecords("aggregate: no records");
    std::map<std::tuple<std::string, int, int>, AccuracyRow> rows;
    for (const EvalRecord& r : records) {
        auto key = std::make_tuple(r.dataset, static_cast<int>(r.task), static_cast<int>(r.strategy));
        AccuracyRow& row = rows[key];
        row.dataset = r.dataset;
        row.task = r.task;
        row.strategy = r.strategy;
        ++row.n_cases;
        if (r.top1_hit) ++row.top1_hits;
        if (r.top10_hit) ++row.top10_hits;
        if (r.degraded) ++row.degraded_count;
    }
    std::vector<AccuracyRow> out;
    for (auto& [key, row] : rows) {
        std::string group = row.dataset + "/" + to_string(row.task) + "/" + to_string(row.strategy);
        auto pf = parse_failures.find(group);
        if (pf != parse_failures.end()) row.parse_failures = pf->second;
        row.top1_fraction = static_cast<double>(row.top1_hits) / row.n_cases;
        row.top10_fraction = static_cast<double>(row.top10_hits) / row.n_cases;
        out.push_back(row);
    }
    // Map iteration already orders by dataset, then task, then strategy enum order.
    return out;
}

inline std::string emit_report(const std::vector<AccuracyRow>& rows, ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::JSON) {
        nlohmann::json j = nlohmann::json::array();
        for (const AccuracyRow& r : rows) {
            j.push_back({{"dataset", r.dataset},
                         {"task", to_string(r.task)},
                         {"strategy", to_string(r.strategy)},
                         {"n_cases", r.n_cases},
                         {"top1_fraction", r.top1_fraction},
                         {"top10_fraction", r.top10_fraction},
                         {"parse_failures", r.parse_failures},
                         {"degraded", r.degraded_count}});
        }
        out << j.dump(2) << "\n";
    } else if (format == ReportFormat::CSV) {
        out << "dataset,task,strategy,n_cases,top1_fraction,top10_fraction,parse_failures,degraded\n";
        for (const AccuracyRow& r : rows) {
            out << r.dataset << "," << to_string(r.task) << "," << to_string(r.strategy) << "," << r.n_cases
                << "," << r.top1_fraction << "," << r.top10_fraction << "," << r.parse_failures << ","
                << r.degraded_count << "\n";
        }
    } else {
        out << std::left << std::setw(14) << "dataset" << std::setw(9) << "task" << std::setw(9) << "strategy"
            << std::right << std::setw(8) << "n" << std::setw(8) << "top1" << std::setw(8) << "top10"
            << std::setw(8) << "pfail" << std::setw(10) << "degraded" << "\n";
        for (const AccuracyRow& r : rows) {
            out << std::left << std::setw(14) << r.dataset << std::setw(9) << to_string(r.task) << std::setw(9)
                << to_string(r.strategy) << std::right << std::setw(8) << r.n_cases << std::setw(8) << std::fixed
                << std::setprecision(2) << r.top1_fraction << std::setw(8) << r.top10_fraction << std::setw(8)
                << r.parse_failures << std::setw(10) << r.degraded_count << "\n";
        }
    }
    return out.str();
}

// --- synonym table persistence ---

inline std::map<std::string, std::vector<std::string>> load_synonym_table(std::istream& in) {
    std::map<std::string, std::vector<std::string>> table;
    std::string line;
    std::size_t record = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++record;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("invalid synonym record: ") + e.what(), record);
        }
        table[j.at("canonical").get<std::string>()] = j.at("synonyms").get<std::vector<std::string>>();
    }
    return table;
}

}  // namespace phenorag
