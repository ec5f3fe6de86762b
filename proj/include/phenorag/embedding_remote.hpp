#pragma once

// Remote embedding provider speaking the minimal JSON protocol:
//   POST url  {"texts": [...], "mode": "sentence"|"tokens"}
//   -> {"dim": int, "vectors": [[float]]}                       (sentence)
//   -> {"dim": int, "token_vectors": [[[float]]], "tokens": [[string]]} (tokens)

#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "phenorag/embedding.hpp"
#include "phenorag/errors.hpp"

namespace phenorag {

class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(RemoteEmbedderConfig cfg) : cfg_(std::move(cfg)) {
        auto scheme_end = cfg_.url.find("://");
        if (scheme_end == std::string::npos) throw Error("embedding url must include scheme: " + cfg_.url);
        auto path_start = cfg_.url.find('/', scheme_end + 3);
        host_ = cfg_.url.substr(0, path_start == std::string::npos ? cfg_.url.size() : path_start);
        path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
    }

    std::size_t dimension() const override { return cfg_.expected_dim; }

    EmbeddingVector embed_text(const std::string& text) const override {
        if (text.empty()) throw EmptyInput("embed_text: empty input");
        nlohmann::json resp = post({{"texts", {text}}, {"mode", "sentence"}});
        check_dim(resp);
        auto vecs = resp.at("vectors");
        if (!vecs.is_array() || vecs.size() != 1) throw ProviderUnavailable("embedding response shape mismatch");
        return EmbeddingVector::from_values(vecs[0].get<std::vector<float>>());
    }

    TokenEmbeddings embed_tokens(const std::string& text, std::size_t max_len = kDefaultMaxSeqLen) const override {
        if (text.empty()) throw EmptyInput("embed_tokens: empty input");
        nlohmann::json resp = post({{"texts", {text}}, {"mode", "tokens"}});
        check_dim(resp);
        TokenEmbeddings out;
        auto tokens = resp.at("tokens");
        auto token_vecs = resp.at("token_vectors");
        if (tokens.size() != 1 || token_vecs.size() != 1) throw ProviderUnavailable("embedding response shape mismatch");
        out.tokens = tokens[0].get<std::vector<std::string>>();
        for (const auto& v : token_vecs[0]) out.vectors.push_back(EmbeddingVector::from_values(v.get<std::vector<float>>()));
        if (out.tokens.size() != out.vectors.size()) throw ProviderUnavailable("token/vector length mismatch");
        if (out.tokens.size() > max_len) {
            out.tokens.resize(max_len);
            out.vectors.resize(max_len);
            out.truncated = true;
        }
        return out;
    }

    std::string config_fingerprint() const override {
        return "remote:" + cfg_.url + ":dim=" + std::to_string(cfg_.expected_dim);
    }

private:
    void check_dim(const nlohmann::json& resp) const {
        if (resp.at("dim").get<std::size_t>() != cfg_.expected_dim) {
            throw DimensionMismatch("provider dim " + resp.at("dim").dump() + " != expected " +
                                    std::to_string(cfg_.expected_dim));
        }
    }

    nlohmann::json post(const nlohmann::json& body) const {
        std::string payload = body.dump();
        int backoff = cfg_.backoff_initial_ms;
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
                backoff *= 2;
            }
            httplib::Client client(host_);
            client.set_connection_timeout(cfg_.timeout_seconds, 0);
            client.set_read_timeout(cfg_.timeout_seconds, 0);
            httplib::Headers headers;
            if (!cfg_.bearer_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.bearer_key);
            auto res = client.Post(path_, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 401 || res->status == 403) throw AuthFailure("embedding auth failed: " + std::to_string(res->status));
            if (res->status != 200) {
                last_error = "http status " + std::to_string(res->status);
                continue;
            }
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                last_error = std::string("bad json: ") + e.what();
            }
        }
        throw ProviderUnavailable("embedding provider unavailable after " + std::to_string(cfg_.max_retries + 1) +
                                  " attempts: " + last_error);
    }

    RemoteEmbedderConfig cfg_;
    std::string host_;
    std::string path_;
};

}  // namespace phenorag
