#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "phenorag/embedding_remote.hpp"
#include "phenorag/llm_remote.hpp"

using namespace phenorag;

namespace {

// Local loopback server running for the duration of one test section.
class TestServer {
public:
    TestServer() = default;

    int start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    ~TestServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    httplib::Server& http() { return server_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

nlohmann::json sentence_payload(std::size_t dim) {
    std::vector<float> v(dim, 0.0f);
    v[0] = 1.0f;
    return {{"dim", dim}, {"vectors", {v}}};
}

RemoteEmbedderConfig fast_cfg(const std::string& url) {
    RemoteEmbedderConfig cfg;
    cfg.url = url;
    cfg.expected_dim = 4;
    cfg.timeout_seconds = 5;
    cfg.max_retries = 2;
    cfg.backoff_initial_ms = 10;
    return cfg;
}

}  // namespace

TEST_CASE("remote embedder happy paths", "[remote]") {
    TestServer server;
    std::atomic<int> requests{0};
    server.http().Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        nlohmann::json body = nlohmann::json::parse(req.body);
        REQUIRE(body.at("texts").size() == 1);
        if (body.at("mode") == "sentence") {
            res.set_content(sentence_payload(4).dump(), "application/json");
        } else {
            REQUIRE(body.at("mode") == "tokens");
            nlohmann::json payload;
            payload["dim"] = 4;
            payload["tokens"] = nlohmann::json::array({nlohmann::json::array({"alpha", "beta"})});
            nlohmann::json vecs = nlohmann::json::array(
                {nlohmann::json::array({std::vector<float>{1, 0, 0, 0}, std::vector<float>{0, 1, 0, 0}})});
            payload["token_vectors"] = vecs;
            res.set_content(payload.dump(), "application/json");
        }
    });
    int port = server.start();

    RemoteEmbedder embedder(fast_cfg("http://127.0.0.1:" + std::to_string(port) + "/embed"));
    CHECK(embedder.dimension() == 4);

    EmbeddingVector v = embedder.embed_text("hello world");
    REQUIRE(v.dim() == 4);
    CHECK(v.values[0] == 1.0f);

    TokenEmbeddings t = embedder.embed_tokens("alpha beta");
    REQUIRE(t.tokens == std::vector<std::string>{"alpha", "beta"});
    REQUIRE(t.vectors.size() == 2);
    CHECK(t.vectors[1].values[1] == 1.0f);
    CHECK_FALSE(t.truncated);

    CHECK(requests == 2);
    CHECK_THROWS_AS(embedder.embed_text(""), EmptyInput);
}

TEST_CASE("remote embedder rejects a provider dim mismatch", "[remote]") {
    TestServer server;
    server.http().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(sentence_payload(8).dump(), "application/json");
    });
    int port = server.start();
    RemoteEmbedder embedder(fast_cfg("http://127.0.0.1:" + std::to_string(port) + "/embed"));
    CHECK_THROWS_AS(embedder.embed_text("x"), DimensionMismatch);
}

TEST_CASE("remote embedder auth failure does not retry", "[remote]") {
    TestServer server;
    std::atomic<int> requests{0};
    server.http().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
        ++requests;
        res.status = 401;
    });
    int port = server.start();
    RemoteEmbedder embedder(fast_cfg("http://127.0.0.1:" + std::to_string(port) + "/embed"));
    CHECK_THROWS_AS(embedder.embed_text("x"), AuthFailure);
    CHECK(requests == 1);
}

TEST_CASE("remote embedder retries server errors then gives up", "[remote]") {
    TestServer server;
    std::atomic<int> requests{0};
    server.http().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
        ++requests;
        res.status = 500;
    });
    int port = server.start();
    RemoteEmbedder embedder(fast_cfg("http://127.0.0.1:" + std::to_string(port) + "/embed"));
    CHECK_THROWS_AS(embedder.embed_text("x"), ProviderUnavailable);
    CHECK(requests == 3);  // initial attempt + max_retries
}

TEST_CASE("remote embedder recovers when a retry succeeds", "[remote]") {
    TestServer server;
    std::atomic<int> requests{0};
    server.http().Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
        if (++requests == 1) {
            res.status = 503;
        } else {
            res.set_content(sentence_payload(4).dump(), "application/json");
        }
    });
    int port = server.start();
    RemoteEmbedder embedder(fast_cfg("http://127.0.0.1:" + std::to_string(port) + "/embed"));
    CHECK(embedder.embed_text("x").dim() == 4);
    CHECK(requests == 2);
}

TEST_CASE("remote embedder requires a scheme in the url", "[remote]") {
    RemoteEmbedderConfig cfg;
    cfg.url = "localhost:9/embed";
    CHECK_THROWS(RemoteEmbedder(cfg));
}

TEST_CASE("remote chat client", "[remote]") {
    TestServer server;
    std::atomic<int> requests{0};
    std::string seen_auth;
    server.http().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        seen_auth = req.get_header_value("Authorization");
        nlohmann::json body = nlohmann::json::parse(req.body);
        if (body.at("model") == "denied") {
            res.status = 403;
            return;
        }
        nlohmann::json out{{"model", body.at("model")},
                           {"choices", {{{"message", {{"role", "assistant"}, {"content", "hello back"}}}}}}};
        res.set_content(out.dump(), "application/json");
    });
    int port = server.start();

    RemoteChatConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.api_key = "secret";
    cfg.model_id = "test-model";
    cfg.timeout_seconds = 5;
    cfg.max_retries = 1;
    cfg.backoff_initial_ms = 10;
    RemoteChatClient client(cfg);

    SECTION("success carries the completion and provider metadata") {
        ChatRequest req;
        req.user = "say hi";
        ChatResponse resp = client.complete(req);
        CHECK(resp.text == "hello back");
        CHECK(resp.provider_meta.at("model") == "test-model");
        CHECK_FALSE(resp.from_mock);
        CHECK(seen_auth == "Bearer secret");
    }
    SECTION("auth failure surfaces immediately") {
        ChatRequest req;
        req.user = "say hi";
        req.model_id = "denied";
        int before = requests;
        CHECK_THROWS_AS(client.complete(req), AuthFailure);
        CHECK(requests == before + 1);
    }
    SECTION("unreachable provider exhausts retries") {
        RemoteChatConfig dead = cfg;
        dead.base_url = "http://127.0.0.1:9";  // discard port, nothing listens
        dead.timeout_seconds = 1;
        dead.max_retries = 0;
        RemoteChatClient dead_client(dead);
        ChatRequest req;
        req.user = "hello?";
        CHECK_THROWS_AS(dead_client.complete(req), ProviderUnavailable);
    }
}
