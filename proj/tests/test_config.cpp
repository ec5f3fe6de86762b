#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <functional>
#include <sstream>
#include <vector>

#include "phenorag/config.hpp"

using namespace phenorag;

namespace {

struct EnvGuard {
    std::string name;
    explicit EnvGuard(std::string n, const std::string& value) : name(std::move(n)) {
        setenv(name.c_str(), value.c_str(), 1);
    }
    ~EnvGuard() { unsetenv(name.c_str()); }
};

}  // namespace

TEST_CASE("built-in defaults", "[config]") {
    RunConfig cfg = resolve_config({}, {});
    CHECK(cfg.chunk_size == 512);
    CHECK(cfg.dense_k == 3);
    CHECK(cfg.rerank_keep == 1);
    CHECK(cfg.context_window == 2048);
    CHECK(cfg.list_length == 10);
    CHECK(cfg.seed == 0);
    CHECK(cfg.timeout_s == 30);
    CHECK(cfg.retries == 3);
    CHECK(cfg.jobs == 4);
    CHECK(cfg.embed_url.empty());
    CHECK(cfg.llm_model.empty());
}

TEST_CASE("config file parsing", "[config]") {
    SECTION("comments, blanks and padding are tolerated") {
        std::istringstream in(
            "# a comment\n"
            "\n"
            "  chunk_size = 256  \n"
            "llm_model=local-8b\n"
            "   # trailing comment line\n");
        auto values = parse_config_file(in);
        REQUIRE(values.size() == 2);
        CHECK(values.at("chunk_size") == "256");
        CHECK(values.at("llm_model") == "local-8b");
    }
    SECTION("line without '=' is rejected with its line number") {
        std::istringstream in("chunk_size = 256\nnot a pair\n");
        try {
            parse_config_file(in);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line_number == 2);
        }
    }
    SECTION("empty key rejected; empty value allowed") {
        std::istringstream bad(" = 3\n");
        CHECK_THROWS_AS(parse_config_file(bad), ParseError);
        std::istringstream ok("llm_model =\n");
        CHECK(parse_config_file(ok).at("llm_model").empty());
    }
    SECTION("missing file is an error") {
        CHECK_THROWS(load_config_file("/nonexistent/phenorag.toml"));
    }
}

TEST_CASE("precedence: CLI beats env beats file beats default", "[config]") {
    std::map<std::string, std::string> file_values{{"chunk_size", "128"}, {"dense_k", "5"},
                                                   {"llm_model", "file-model"}};

    SECTION("file alone overrides defaults") {
        RunConfig cfg = resolve_config({}, file_values);
        CHECK(cfg.chunk_size == 128);
        CHECK(cfg.dense_k == 5);
        CHECK(cfg.llm_model == "file-model");
        CHECK(cfg.rerank_keep == 1);  // untouched field keeps its default
    }
    SECTION("env overrides file") {
        EnvGuard e1("PHENORAG_CHUNK_SIZE", "64");
        EnvGuard e2("PHENORAG_LLM_MODEL", "env-model");
        RunConfig cfg = resolve_config({}, file_values);
        CHECK(cfg.chunk_size == 64);
        CHECK(cfg.llm_model == "env-model");
        CHECK(cfg.dense_k == 5);  // file still wins where env is silent
    }
    SECTION("CLI overrides env and file") {
        EnvGuard e1("PHENORAG_CHUNK_SIZE", "64");
        RunConfig cfg = resolve_config({{"chunk_size", "32"}, {"context_window", "5120"}}, file_values);
        CHECK(cfg.chunk_size == 32);
        CHECK(cfg.context_window == 5120);
    }
    SECTION("every numeric field resolves through the same chain") {
        struct Probe {
            const char* key;
            std::function<std::size_t(const RunConfig&)> get;
        };
        std::vector<Probe> probes{
            {"chunk_size", [](const RunConfig& c) { return c.chunk_size; }},
            {"dense_k", [](const RunConfig& c) { return c.dense_k; }},
            {"rerank_keep", [](const RunConfig& c) { return c.rerank_keep; }},
            {"context_window", [](const RunConfig& c) { return c.context_window; }},
            {"list_length", [](const RunConfig& c) { return c.list_length; }},
            {"seed", [](const RunConfig& c) { return static_cast<std::size_t>(c.seed); }},
            {"timeout_s", [](const RunConfig& c) { return static_cast<std::size_t>(c.timeout_s); }},
            {"retries", [](const RunConfig& c) { return static_cast<std::size_t>(c.retries); }},
            {"jobs", [](const RunConfig& c) { return static_cast<std::size_t>(c.jobs); }},
        };
        for (const Probe& p : probes) {
            INFO("key " << p.key);
            std::map<std::string, std::string> file{{p.key, "7"}};
            CHECK(p.get(resolve_config({}, file)) == 7);
            EnvGuard env("PHENORAG_" + detail::uppercase(p.key), "8");
            CHECK(p.get(resolve_config({}, file)) == 8);
            CHECK(p.get(resolve_config({{p.key, "9"}}, file)) == 9);
        }
    }
    SECTION("resolve_value reports absence") {
        CHECK_FALSE(resolve_value("chunk_size", {}, {}).has_value());
        CHECK(resolve_value("chunk_size", {{"chunk_size", "1"}}, {}) == "1");
    }
}

TEST_CASE("result-relevant header excludes execution details", "[config]") {
    RunConfig a = resolve_config({}, {});
    RunConfig b = a;
    b.jobs = 8;
    b.timeout_s = 5;
    b.retries = 0;
    CHECK(a.result_relevant_json() == b.result_relevant_json());

    nlohmann::json j = a.result_relevant_json();
    CHECK_FALSE(j.contains("jobs"));
    CHECK_FALSE(j.contains("timeout_s"));
    CHECK_FALSE(j.contains("retries"));
    CHECK(j.at("chunk_size") == 512);
    CHECK(j.at("version") == std::string(kToolVersion));

    // Result-relevant knobs do change the header.
    RunConfig c = a;
    c.seed = 1;
    CHECK(a.result_relevant_json() != c.result_relevant_json());
}
