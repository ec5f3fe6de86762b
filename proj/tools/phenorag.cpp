// phenorag: phenotype-driven gene/disease prioritization pipeline.
// Subcommands: ingest, index, run, eval, stats.
//
// Exit codes: 1 usage, 2 ingest/store error, 3 embedding provider error,
// 4 unrecoverable LLM provider error, 5 evaluation input error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "phenorag/config.hpp"
#include "phenorag/corpus.hpp"
#include "phenorag/embedding.hpp"
#include "phenorag/embedding_remote.hpp"
#include "phenorag/evalharness.hpp"
#include "phenorag/llm.hpp"
#include "phenorag/llm_remote.hpp"
#include "phenorag/pipeline.hpp"
#include "phenorag/promptkit.hpp"
#include "phenorag/retrieval.hpp"
#include "phenorag/runner.hpp"

namespace {

using namespace phenorag;

struct CommonOpts {
    std::string config_path;
    std::map<std::string, std::string> cli_values;
};

RunConfig resolve(const CommonOpts& common) {
    std::map<std::string, std::string> file_values;
    if (!common.config_path.empty()) {
        file_values = load_config_file(common.config_path);
    } else if (std::filesystem::exists("phenorag.toml")) {
        file_values = load_config_file("phenorag.toml");
    }
    return resolve_config(common.cli_values, file_values);
}

std::unique_ptr<Embedder> make_embedder(bool mock, const RunConfig& cfg) {
    if (mock || cfg.embed_url.empty()) return std::make_unique<MockEmbedder>(cfg.seed);
    RemoteEmbedderConfig rc;
    rc.url = cfg.embed_url;
    rc.bearer_key = cfg.embed_key;
    rc.timeout_seconds = cfg.timeout_s;
    rc.max_retries = cfg.retries;
    return std::make_unique<RemoteEmbedder>(rc);
}

TemplateSet load_templates(const std::string& prompts_dir) {
    if (prompts_dir.empty()) return TemplateSet::builtin();
    return TemplateSet::load_dir(prompts_dir);
}

int cmd_ingest(const std::vector<std::string>& hpo_paths, const std::vector<std::string>& omim_paths,
               const std::string& out_path, bool skip_bad, const RunConfig& cfg) {
    std::vector<Chunk> all_chunks;
    std::size_t docs = 0, rejects = 0;

    auto ingest_doc = [&](const KnowledgeDoc& doc) {
        auto chunks = chunk_document(doc, cfg.chunk_size);
        all_chunks.insert(all_chunks.end(), chunks.begin(), chunks.end());
        ++docs;
    };

    for (const std::string& path : hpo_paths) {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "cannot open " << path << "\n";
            return 2;
        }
        std::string line;
        std::size_t line_number = 0;
        std::string stem = std::filesystem::path(path).stem().string();
        while (std::getline(in, line)) {
            ++line_number;
            if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            try {
                ingest_doc(parse_hpo_record(line, stem + "-" + std::to_string(line_number), line_number));
            } catch (const ParseError& e) {
                ++rejects;
                std::cerr << path << ": " << e.what() << "\n";
                if (!skip_bad) return 2;
            }
        }
    }
    for (const std::string& path : omim_paths) {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "cannot open " << path << "\n";
            return 2;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        try {
            for (const KnowledgeDoc& doc : parse_omim_text(ss.str())) ingest_doc(doc);
        } catch (const ParseError& e) {
            ++rejects;
            std::cerr << path << ": " << e.what() << "\n";
            if (!skip_bad) return 2;
        }
    }

    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        std::cerr << "cannot write " << out_path << "\n";
        return 2;
    }
    save_chunk_store(all_chunks, out);
    std::cerr << "ingested " << docs << " docs, " << all_chunks.size() << " chunks, " << rejects
              << " rejects -> " << out_path << "\n";
    return 0;
}

int cmd_index(const std::string& store_path, const std::string& out_path, bool mock, const RunConfig& cfg) {
    std::ifstream in(store_path);
    if (!in) {
        std::cerr << "cannot open store " << store_path << "\n";
        return 2;
    }
    std::vector<Chunk> chunks;
    try {
        chunks = load_chunk_store(in);
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    try {
        auto embedder = make_embedder(mock, cfg);
        DenseIndex index = build_index(chunks, *embedder);
        std::ofstream out(out_path, std::ios::binary);
        if (!out) {
            std::cerr << "cannot write " << out_path << "\n";
            return 2;
        }
        save_index(index, out);
        std::cerr << "indexed " << index.entries.size() << " entries, fingerprint " << index.build_fingerprint
                  << " -> " << out_path << "\n";
        return 0;
    } catch (const ProviderUnavailable& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const AuthFailure& e) {
        std::cerr << e.what() << "\n";
        return 3;
    }
}

int cmd_run(const std::string& notes_path, const std::string& strategy_str, const std::string& task_str,
            const std::string& out_path, const std::string& store_path, const std::string& index_path,
            const std::string& mock_llm_script, bool mock_embed_flag, const std::string& transcript_path,
            const std::string& prompts_dir, std::optional<std::size_t> limit, bool resume,
            const RunConfig& cfg) {
    Strategy strategy = strategy_from_string(strategy_str);
    Task task = task_from_string(task_str);

    bool needs_rag = strategy == Strategy::RAG || strategy == Strategy::RAG_COT || strategy == Strategy::COT_RAG;
    if (needs_rag && (index_path.empty() || store_path.empty())) {
        std::cerr << "strategy '" << strategy_str << "' requires --index and --store\n";
        return 1;
    }

    std::vector<ClinicalNote> notes;
    try {
        notes = load_dataset(notes_path);
    } catch (const SchemaError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    std::unique_ptr<Embedder> embedder;
    DenseIndex index;
    ChunkStore store;
    RagResources rag;
    if (needs_rag) {
        std::ifstream store_in(store_path);
        std::ifstream index_in(index_path);
        if (!store_in || !index_in) {
            std::cerr << "cannot open store/index\n";
            return 2;
        }
        store = ChunkStore(load_chunk_store(store_in));
        index = load_index(index_in);
        embedder = make_embedder(mock_embed_flag, cfg);
        if (embedder->dimension() != index.dimension) {
            std::cerr << "index dimension " << index.dimension << " does not match embedder "
                      << embedder->dimension() << "\n";
            return 3;
        }
        rag.index = &index;
        rag.store = &store;
        rag.embedder = embedder.get();
    }

    std::unique_ptr<TranscriptLog> transcript;
    if (!transcript_path.empty()) transcript = std::make_unique<TranscriptLog>(transcript_path);

    std::unique_ptr<ChatClient> llm;
    if (!mock_llm_script.empty()) {
        llm = std::make_unique<ScriptedClient>(Script::load(mock_llm_script), transcript.get());
    } else if (!cfg.llm_url.empty()) {
        RemoteChatConfig rc;
        rc.base_url = cfg.llm_url;
        rc.api_key = cfg.llm_key;
        rc.model_id = cfg.llm_model;
        rc.timeout_seconds = cfg.timeout_s;
        rc.max_retries = cfg.retries;
        llm = std::make_unique<RemoteChatClient>(rc, transcript.get());
    } else {
        std::cerr << "no LLM configured: pass --mock-llm or set llm_url\n";
        return 1;
    }

    BatchOptions opts;
    opts.strategy = strategy;
    opts.task = task;
    opts.jobs = cfg.jobs;
    opts.limit = limit;
    opts.resume = resume;

    try {
        BatchResult result = run_batch(notes, *llm, rag, cfg, opts, out_path, load_templates(prompts_dir));
        std::cerr << "processed " << result.processed << " notes (" << result.parse_failures
                  << " parse failures, " << result.skipped << " resumed) -> " << out_path << "\n";
        return 0;
    } catch (const ProviderUnavailable& e) {
        std::cerr << e.what() << "\n";
        return 4;
    } catch (const AuthFailure& e) {
        std::cerr << e.what() << "\n";
        return 4;
    }
}

int cmd_eval(const std::string& predictions_path, const std::string& dataset_path,
             const std::string& synonyms_path, double threshold, bool use_embeddings, bool mock_embed_flag,
             const std::string& out_dir, const RunConfig& cfg) {
    try {
        PredictionsFile file = load_predictions(predictions_path);
        std::vector<ClinicalNote> dataset = load_dataset(dataset_path);

        MatchConfig match_cfg;
        match_cfg.semantic_threshold = threshold;
        match_cfg.use_embeddings_for_disease = use_embeddings;
        if (!synonyms_path.empty()) {
            std::ifstream syn(synonyms_path);
            if (!syn) {
                std::cerr << "cannot open synonym table " << synonyms_path << "\n";
                return 5;
            }
            match_cfg.disease_synonyms = load_synonym_table(syn);
        }
        std::unique_ptr<Embedder> embedder;
        if (use_embeddings) embedder = make_embedder(mock_embed_flag, cfg);

        std::vector<EvalRecord> records = score_predictions(file, dataset, match_cfg, embedder.get());
        std::map<std::string, std::size_t> parse_failures;
        for (const PredictionRecord& rec : file.records) {
            if (!rec.prediction) {
                auto it = std::find_if(dataset.begin(), dataset.end(),
                                       [&](const ClinicalNote& n) { return n.note_id == rec.note_id; });
                std::string group = to_string(it->dataset) + "/" + to_string(rec.task) + "/" + to_string(rec.strategy);
                ++parse_failures[group];
            }
        }
        std::vector<AccuracyRow> rows = aggregate(records, parse_failures);

        std::filesystem::create_directories(out_dir);
        nlohmann::json meta{{"config", cfg.result_relevant_json()},
                            {"semantic_threshold", threshold},
                            {"use_embeddings_for_disease", use_embeddings}};
        {
            std::ofstream out(std::filesystem::path(out_dir) / "report.json");
            out << "{\"meta\": " << meta.dump() << ",\n\"rows\": " << emit_report(rows, ReportFormat::JSON) << "}\n";
        }
        {
            std::ofstream out(std::filesystem::path(out_dir) / "report.csv");
            out << emit_report(rows, ReportFormat::CSV);
        }
        std::string table = emit_report(rows, ReportFormat::TABLE);
        {
            std::ofstream out(std::filesystem::path(out_dir) / "report.txt");
            out << table;
        }
        std::cout << table;
        return 0;
    } catch (const EmptyRecords& e) {
        std::cerr << e.what() << "\n";
        return 5;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 5;
    }
}

int cmd_stats(const std::string& store_path, const std::string& json_out) {
    std::ifstream in(store_path);
    if (!in) {
        std::cerr << "cannot open store " << store_path << "\n";
        return 2;
    }
    std::vector<Chunk> chunks;
    try {
        chunks = load_chunk_store(in);
        CorpusStats stats = compute_corpus_stats(chunks);
        std::cout << "total_chunks " << stats.total_chunks << "\n";
        for (const auto& [source, count] : stats.per_source_chunks) std::cout << source << " " << count << "\n";
        std::cout << "mean " << stats.token_count_mean << "\nmedian " << stats.token_count_median << "\nmin "
                  << stats.min_tokens << "\nmax " << stats.max_tokens << "\n";
        std::cout << "histogram (bucket " << stats.histogram_bucket_width << " tokens):\n";
        for (const auto& [bucket, count] : stats.histogram) std::cout << "  " << bucket << ": " << count << "\n";
        if (!json_out.empty()) {
            nlohmann::json j{{"total_chunks", stats.total_chunks},
                             {"per_source_chunks", stats.per_source_chunks},
                             {"mean", stats.token_count_mean},
                             {"median", stats.token_count_median},
                             {"min", stats.min_tokens},
                             {"max", stats.max_tokens},
                             {"histogram", stats.histogram}};
            std::ofstream out(json_out);
            out << j.dump(2) << "\n";
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phenorag: gene/disease prioritization from clinical notes"};
    app.set_version_flag("--version", phenorag::kToolVersion);
    app.require_subcommand(1);

    CommonOpts common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "config file (key=value lines)");
        auto track = [&](const char* flag, const char* key) {
            sub->add_option_function<std::string>(
                flag, [&common, key](const std::string& v) { common.cli_values[key] = v; });
        };
        track("--chunk-size", "chunk_size");
        track("--dense-k", "dense_k");
        track("--keep", "rerank_keep");
        track("--window", "context_window");
        track("--list-length", "list_length");
        track("--seed", "seed");
        track("--embed-url", "embed_url");
        track("--llm-url", "llm_url");
        track("--llm-model", "llm_model");
        track("--jobs", "jobs");
        track("--timeout", "timeout_s");
        track("--retries", "retries");
    };

    // ingest
    auto* ingest = app.add_subcommand("ingest", "build a chunk store from HPO/OMIM source files");
    std::vector<std::string> hpo_paths, omim_paths;
    std::string out_path = "chunks.phr";
    bool skip_bad = false;
    ingest->add_option("--hpo", hpo_paths, "HPO record files (one JSON object per line)");
    ingest->add_option("--omim", omim_paths, "OMIM text files (#OMIM headers)");
    ingest->add_option("--out", out_path, "output chunk store")->required();
    ingest->add_flag("--skip-bad", skip_bad, "log and skip malformed records instead of failing");
    add_common(ingest);

    // index
    auto* index_cmd = app.add_subcommand("index", "embed a chunk store into a dense index");
    std::string store_path, index_out;
    bool mock_embed_flag = false;
    index_cmd->add_option("--store", store_path, "chunk store file")->required();
    index_cmd->add_option("--out", index_out, "output index file")->required();
    index_cmd->add_flag("--mock-embed", mock_embed_flag, "use the deterministic mock embedder");
    add_common(index_cmd);

    // run
    auto* run_cmd = app.add_subcommand("run", "run an inference strategy over a dataset");
    std::string notes_path, strategy_str, task_str = "gene", run_out = "predictions.jsonl";
    std::string run_store, run_index, mock_llm_script, transcript_path, prompts_dir;
    std::size_t limit_value = 0;
    bool resume = false;
    run_cmd->add_option("--notes", notes_path, "dataset JSONL file")->required();
    run_cmd->add_option("--strategy", strategy_str, "base|cot|rag|rag-cot|cot-rag")->required();
    run_cmd->add_option("--task", task_str, "gene|disease");
    run_cmd->add_option("--out", run_out, "predictions output JSONL");
    run_cmd->add_option("--store", run_store, "chunk store (RAG strategies)");
    run_cmd->add_option("--index", run_index, "dense index (RAG strategies)");
    run_cmd->add_option("--mock-llm", mock_llm_script, "scripted mock LLM (JSON script file)");
    run_cmd->add_flag("--mock-embed", mock_embed_flag, "use the deterministic mock embedder");
    run_cmd->add_option("--transcript", transcript_path, "append-only request/response log");
    run_cmd->add_option("--prompts", prompts_dir, "prompt template directory (default: builtin)");
    run_cmd->add_option("--limit", limit_value, "process at most N notes");
    run_cmd->add_flag("--resume", resume, "skip notes already in the output file");
    add_common(run_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against a dataset");
    std::string predictions_path, dataset_path, synonyms_path, report_dir = ".";
    double threshold = 0.90;
    bool use_embeddings = false;
    eval_cmd->add_option("--predictions", predictions_path, "predictions JSONL")->required();
    eval_cmd->add_option("--dataset", dataset_path, "dataset JSONL")->required();
    eval_cmd->add_option("--synonyms", synonyms_path, "disease synonym table JSONL");
    eval_cmd->add_option("--threshold", threshold, "semantic disease-match threshold");
    eval_cmd->add_flag("--semantic", use_embeddings, "enable embedding-based disease matching");
    eval_cmd->add_flag("--mock-embed", mock_embed_flag, "use the deterministic mock embedder");
    eval_cmd->add_option("--report-dir", report_dir, "directory for report.json/csv/txt");
    add_common(eval_cmd);

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "corpus statistics for a chunk store");
    std::string stats_store, stats_json;
    stats_cmd->add_option("--store", stats_store, "chunk store file")->required();
    stats_cmd->add_option("--json", stats_json, "also write stats as JSON");
    add_common(stats_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        phenorag::RunConfig cfg = resolve(common);
        if (ingest->parsed()) return cmd_ingest(hpo_paths, omim_paths, out_path, skip_bad, cfg);
        if (index_cmd->parsed()) return cmd_index(store_path, index_out, mock_embed_flag, cfg);
        if (run_cmd->parsed()) {
            std::optional<std::size_t> limit;
            if (limit_value > 0) limit = limit_value;
            return cmd_run(notes_path, strategy_str, task_str, run_out, run_store, run_index, mock_llm_script,
                           mock_embed_flag, transcript_path, prompts_dir, limit, resume, cfg);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(predictions_path, dataset_path, synonyms_path, threshold, use_embeddings,
                            mock_embed_flag, report_dir, cfg);
        }
        if (stats_cmd->parsed()) return cmd_stats(stats_store, stats_json);
    } catch (const phenorag::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 1;
}
