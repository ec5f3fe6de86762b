#pragma once

// Chat-completion client abstraction: a scripted deterministic mock for
// tests and fixtures, plus transcript capture. The remote client lives in
// llm_remote.hpp.

#include <chrono>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "phenorag/errors.hpp"
#include "phenorag/hash.hpp"
#include "phenorag/tokenize.hpp"

namespace phenorag {

struct ChatRequest {
    std::string system;
    std::string user;
    std::string model_id;
    double temperature = 0.0;
    std::size_t max_output_tokens = 4096;
    std::string request_id;
};

struct ChatResponse {
    std::string text;
    long latency_ms = 0;
    std::map<std::string, std::string> provider_meta;
    bool from_mock = false;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Collapses whitespace runs to single spaces and trims, so script keys stay
// stable under cosmetic edits (line endings, indentation).
inline std::string normalize_prompt(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (WordPunctTokenizer::is_space(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

inline std::string prompt_key(std::string_view system, std::string_view user) {
    return Sha256::hex(normalize_prompt(std::string(system) + "\n" + std::string(user)));
}

// Append-only request/response log; appends are serialized.
class TranscriptLog {
public:
    explicit TranscriptLog(std::string path) : path_(std::move(path)) {}

    void append(const ChatRequest& req, const ChatResponse& resp) {
        nlohmann::json record{
            {"request_id", req.request_id},
            {"timestamp", now_iso8601()},
            {"request",
             {{"system", req.system}, {"user", req.user}, {"model_id", req.model_id},
              {"temperature", req.temperature}, {"max_output_tokens", req.max_output_tokens}}},
            {"response",
             {{"text", resp.text}, {"latency_ms", resp.latency_ms}, {"from_mock", resp.from_mock}}}};
        std::lock_guard<std::mutex> lock(mutex_);
        std::ofstream out(path_, std::ios::app);
        out << record.dump() << "\n";
    }

private:
    static std::string now_iso8601() {
        auto now = std::chrono::system_clock::now();
        std::time_t t = std::chrono::system_clock::to_time_t(now);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        return buf;
    }

    std::string path_;
    std::mutex mutex_;
};

// --- scripted mock ---

struct ScriptEntry {
    std::optional<std::string> prompt_sha256;
    std::vector<std::string> contains;  // all must be present in the normalized prompt
    std::string response;
};

struct Script {
    std::vector<ScriptEntry> entries;
    std::optional<std::string> fallback;

    static Script parse(const nlohmann::json& j) {
        Script script;
        if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array()) {
            throw ScriptParseError("script must be an object with an 'entries' array");
        }
        std::set<std::string> seen_keys;
        for (const auto& e : j["entries"]) {
            if (!e.is_object() || !e.contains("match") || !e.contains("response")) {
                throw ScriptParseError("script entry needs 'match' and 'response'");
            }
            ScriptEntry entry;
            const auto& match = e["match"];
            if (match.contains("prompt_sha256")) {
                entry.prompt_sha256 = match["prompt_sha256"].get<std::string>();
                if (!seen_keys.insert(*entry.prompt_sha256).second) {
                    throw ScriptParseError("duplicate prompt_sha256 key: " + *entry.prompt_sha256);
                }
            }
            if (match.contains("contains")) {
                if (match["contains"].is_string()) {
                    entry.contains.push_back(match["contains"].get<std::string>());
                } else if (match["contains"].is_array()) {
                    for (const auto& c : match["contains"]) entry.contains.push_back(c.get<std::string>());
                } else {
                    throw ScriptParseError("'contains' must be a string or list of strings");
                }
            }
            if (!entry.prompt_sha256 && entry.contains.empty()) {
                throw ScriptParseError("script entry match needs 'prompt_sha256' or 'contains'");
            }
            entry.response = e["response"].get<std::string>();
            script.entries.push_back(std::move(entry));
        }
        if (j.contains("fallback")) script.fallback = j["fallback"].get<std::string>();
        return script;
    }

    static Script load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ScriptParseError("cannot open script file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ScriptParseError(std::string("script JSON parse error: ") + e.what());
        }
        return parse(j);
    }
};

class ScriptedClient final : public ChatClient {
public:
    explicit ScriptedClient(Script script, TranscriptLog* transcript = nullptr)
        : script_(std::move(script)), transcript_(transcript) {}

    ChatResponse complete(const ChatRequest& request) override {
        std::string key = prompt_key(request.system, request.user);
        std::string normalized = normalize_prompt(request.system + "\n" + request.user);

        const std::string* answer = nullptr;
        for (const ScriptEntry& entry : script_.entries) {
            if (entry.prompt_sha256 && *entry.prompt_sha256 != key) continue;
            bool ok = true;
            for (const std::string& needle : entry.contains) {
                if (normalized.find(normalize_prompt(needle)) == std::string::npos) {
                    ok = false;
                    break;
                }
            }
            if (!entry.prompt_sha256 && entry.contains.empty()) ok = false;
            if (ok) {
                answer = &entry.response;
                break;
            }
        }
        if (!answer && script_.fallback) answer = &*script_.fallback;
        if (!answer) {
            throw UnscriptedPrompt("no script entry matches prompt (sha256 " + key + ")");
        }
        ChatResponse resp;
        resp.text = *answer;
        resp.from_mock = true;
        if (transcript_) transcript_->append(request, resp);
        return resp;
    }

private:
    Script script_;
    TranscriptLog* transcript_;
};

inline ScriptedClient load_script(const std::string& path, TranscriptLog* transcript = nullptr) {
    return ScriptedClient(Script::load(path), transcript);
}

}  // namespace phenorag
