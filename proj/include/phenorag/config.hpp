#pragma once

// Run configuration with layered resolution: CLI flag > env var > config
// file > built-in default. Env vars are PHENORAG_<KEY> (key uppercased).

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "phenorag/corpus.hpp"
#include "phenorag/errors.hpp"

namespace phenorag {

inline constexpr const char* kToolVersion = "phenorag 1.0.0";

struct RunConfig {
    std::size_t chunk_size = 512;
    std::size_t dense_k = 3;
    std::size_t rerank_keep = 1;
    std::size_t context_window = 2048;  // 5120 selectable for long in-house notes
    std::size_t list_length = 10;
    std::uint64_t seed = 0;
    std::string embed_url;
    std::string embed_key;
    std::string llm_url;
    std::string llm_key;
    std::string llm_model;
    int timeout_s = 30;
    int retries = 3;
    int jobs = 4;

    // Result-relevant fields only; execution details like jobs are kept out
    // so artifacts stay byte-identical across worker counts.
    nlohmann::json result_relevant_json() const {
        return nlohmann::json{{"chunk_size", chunk_size}, {"dense_k", dense_k},
                              {"rerank_keep", rerank_keep}, {"context_window", context_window},
                              {"list_length", list_length}, {"seed", seed},
                              {"llm_model", llm_model},     {"version", kToolVersion}};
    }
};

// key=value lines; '#' starts a comment; whitespace around keys/values is
// ignored.
inline std::map<std::string, std::string> parse_config_file(std::istream& in) {
    std::map<std::string, std::string> values;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        std::string trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        std::size_t eq = trimmed.find('=');
        if (eq == std::string::npos) throw ParseError("config line has no '='", line_number);
        std::string key = detail::trim(trimmed.substr(0, eq));
        std::string value = detail::trim(trimmed.substr(eq + 1));
        if (key.empty()) throw ParseError("config line has empty key", line_number);
        values[key] = value;
    }
    return values;
}

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path);
    return parse_config_file(in);
}

namespace detail {

inline std::optional<std::string> env_value(const std::string& key) {
    std::string name = "PHENORAG_" + uppercase(key);
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
}

}  // namespace detail

// Resolves one key through the precedence chain. `cli` holds only values
// the user explicitly set on the command line.
inline std::optional<std::string> resolve_value(const std::string& key,
                                                const std::map<std::string, std::string>& cli,
                                                const std::map<std::string, std::string>& file_values) {
    if (auto it = cli.find(key); it != cli.end()) return it->second;
    if (auto env = detail::env_value(key)) return env;
    if (auto it = file_values.find(key); it != file_values.end()) return it->second;
    return std::nullopt;
}

inline RunConfig resolve_config(const std::map<std::string, std::string>& cli,
                                const std::map<std::string, std::string>& file_values) {
    RunConfig cfg;
    auto set_size = [&](const char* key, std::size_t& field) {
        if (auto v = resolve_value(key, cli, file_values)) field = std::stoull(*v);
    };
    auto set_int = [&](const char* key, int& field) {
        if (auto v = resolve_value(key, cli, file_values)) field = std::stoi(*v);
    };
    auto set_str = [&](const char* key, std::string& field) {
        if (auto v = resolve_value(key, cli, file_values)) field = *v;
    };
    set_size("chunk_size", cfg.chunk_size);
    set_size("dense_k", cfg.dense_k);
    set_size("rerank_keep", cfg.rerank_keep);
    set_size("context_window", cfg.context_window);
    set_size("list_length", cfg.list_length);
    if (auto v = resolve_value("seed", cli, file_values)) cfg.seed = std::stoull(*v);
    set_str("embed_url", cfg.embed_url);
    set_str("embed_key", cfg.embed_key);
    set_str("llm_url", cfg.llm_url);
    set_str("llm_key", cfg.llm_key);
    set_str("llm_model", cfg.llm_model);
    set_int("timeout_s", cfg.timeout_s);
    set_int("retries", cfg.retries);
    set_int("jobs", cfg.jobs);
    return cfg;
}

}  // namespace phenorag
