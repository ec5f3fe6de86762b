#pragma once

// Remote chat-completion client speaking the de-facto chat-completions JSON
// shape: POST {base_url}/v1/chat/completions with role-tagged messages.

#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "phenorag/errors.hpp"
#include "phenorag/llm.hpp"

namespace phenorag {

struct RemoteChatConfig {
    std::string base_url;  // e.g. http://localhost:8000
    std::string api_key;   // optional bearer token
    std::string model_id;
    int timeout_seconds = 30;
    int max_retries = 3;
    int backoff_initial_ms = 500;
};

class RemoteChatClient final : public ChatClient {
public:
    explicit RemoteChatClient(RemoteChatConfig cfg, TranscriptLog* transcript = nullptr)
        : cfg_(std::move(cfg)), transcript_(transcript) {}

    ChatResponse complete(const ChatRequest& request) override {
        nlohmann::json messages = nlohmann::json::array();
        if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
        messages.push_back({{"role", "user"}, {"content", request.user}});
        nlohmann::json body{{"model", request.model_id.empty() ? cfg_.model_id : request.model_id},
                            {"messages", messages},
                            {"temperature", request.temperature},
                            {"max_tokens", request.max_output_tokens}};

        int backoff = cfg_.backoff_initial_ms;
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
                backoff *= 2;
            }
            auto start = std::chrono::steady_clock::now();
            httplib::Client client(cfg_.base_url);
            client.set_connection_timeout(cfg_.timeout_seconds, 0);
            client.set_read_timeout(cfg_.timeout_seconds, 0);
            httplib::Headers headers;
            if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
            auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport error " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 401 || res->status == 403) {
                throw AuthFailure("chat auth failed: status " + std::to_string(res->status));
            }
            if (res->status != 200) {
                last_error = "http status " + std::to_string(res->status);
                continue;
            }
            try {
                nlohmann::json j = nlohmann::json::parse(res->body);
                ChatResponse resp;
                resp.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
                resp.latency_ms = static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                                        std::chrono::steady_clock::now() - start)
                                                        .count());
                if (j.contains("model")) resp.provider_meta["model"] = j["model"].get<std::string>();
                if (resp.text.empty()) {
                    last_error = "empty completion";
                    continue;
                }
                if (transcript_) transcript_->append(request, resp);
                return resp;
            } catch (const nlohmann::json::exception& e) {
                last_error = std::string("bad json: ") + e.what();
            }
        }
        throw ProviderUnavailable("chat provider unavailable after " + std::to_string(cfg_.max_retries + 1) +
                                  " attempts: " + last_error);
    }

private:
    RemoteChatConfig cfg_;
    TranscriptLog* transcript_;
};

}  // namespace phenorag
