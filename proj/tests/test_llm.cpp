#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "phenorag/hash.hpp"
#include "phenorag/llm.hpp"

using namespace phenorag;

TEST_CASE("sha256 matches the published test vector", "[llm]") {
    CHECK(Sha256::hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(Sha256::hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    // 56-byte input exercises the two-block padding path.
    CHECK(Sha256::hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("prompt keys are stable under cosmetic whitespace edits", "[llm]") {
    CHECK(normalize_prompt("  a\r\n  b\tc  ") == "a b c");
    CHECK(normalize_prompt("") == "");
    CHECK(prompt_key("sys", "user text") == prompt_key("sys", "user    text"));
    CHECK(prompt_key("sys", "user\ntext") == prompt_key("sys ", " user text "));
    CHECK(prompt_key("sys", "user text") != prompt_key("sys", "user texts"));
}

TEST_CASE("script parsing", "[llm]") {
    SECTION("two entries answered exactly") {
        nlohmann::json j{{"entries",
                          {{{"match", {{"contains", "alpha"}}}, {"response", "A"}},
                           {{"match", {{"contains", "beta"}}}, {"response", "B"}}}}};
        Script s = Script::parse(j);
        REQUIRE(s.entries.size() == 2);
        CHECK_FALSE(s.fallback.has_value());
    }
    SECTION("contains accepts a list of needles") {
        nlohmann::json j{{"entries", {{{"match", {{"contains", {"a", "b"}}}}, {"response", "R"}}}}};
        CHECK(Script::parse(j).entries[0].contains.size() == 2);
    }
    SECTION("duplicate prompt_sha256 keys rejected") {
        nlohmann::json j{{"entries",
                          {{{"match", {{"prompt_sha256", "k1"}}}, {"response", "A"}},
                           {{"match", {{"prompt_sha256", "k1"}}}, {"response", "B"}}}}};
        CHECK_THROWS_AS(Script::parse(j), ScriptParseError);
    }
    SECTION("entry without any matcher rejected") {
        nlohmann::json j{{"entries", {{{"match", nlohmann::json::object()}, {"response", "A"}}}}};
        CHECK_THROWS_AS(Script::parse(j), ScriptParseError);
    }
    SECTION("missing entries array rejected") {
        CHECK_THROWS_AS(Script::parse(nlohmann::json::object()), ScriptParseError);
        CHECK_THROWS_AS(Script::load("/nonexistent/script.json"), ScriptParseError);
    }
}

TEST_CASE("scripted client lookup", "[llm]") {
    ChatRequest req;
    req.system = "You are a test.";
    req.user = "alpha prompt body";
    req.request_id = "r1";

    SECTION("sha256 lookup returns the scripted string") {
        Script s;
        ScriptEntry e;
        e.prompt_sha256 = prompt_key(req.system, req.user);
        e.response = "scripted!";
        s.entries.push_back(e);
        ScriptedClient client(s);
        ChatResponse resp = client.complete(req);
        CHECK(resp.text == "scripted!");
        CHECK(resp.from_mock);
        // Determinism: identical request, identical response.
        CHECK(client.complete(req).text == "scripted!");
    }
    SECTION("contains lookup is whitespace-insensitive; first match wins") {
        Script s;
        ScriptEntry first, second;
        first.contains = {"alpha   prompt"};
        first.response = "first";
        second.contains = {"alpha"};
        second.response = "second";
        s.entries = {first, second};
        CHECK(ScriptedClient(s).complete(req).text == "first");
    }
    SECTION("all needles must match") {
        Script s;
        ScriptEntry e;
        e.contains = {"alpha", "missing-needle"};
        e.response = "no";
        s.entries.push_back(e);
        s.fallback = "fb";
        CHECK(ScriptedClient(s).complete(req).text == "fb");
    }
    SECTION("strict mode raises on unscripted prompts") {
        CHECK_THROWS_AS(ScriptedClient(Script{}).complete(req), UnscriptedPrompt);
    }
    SECTION("fallback answers unscripted prompts when present") {
        Script s;
        s.fallback = "default answer";
        CHECK(ScriptedClient(s).complete(req).text == "default answer");
    }
}

TEST_CASE("transcript captures every call exactly once", "[llm]") {
    std::string path = "test_transcript_tmp.jsonl";
    std::remove(path.c_str());
    {
        TranscriptLog log(path);
        Script s;
        s.fallback = "ok";
        ScriptedClient client(s, &log);
        for (int i = 0; i < 5; ++i) {
            ChatRequest req;
            req.user = "prompt " + std::to_string(i);
            req.request_id = "req-" + std::to_string(i);
            client.complete(req);
        }
    }
    std::ifstream in(path);
    REQUIRE(in);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        nlohmann::json j = nlohmann::json::parse(line);
        ids.push_back(j.at("request_id").get<std::string>());
        CHECK(j.at("response").at("text") == "ok");
        CHECK(j.contains("timestamp"));
        CHECK(j.at("request").contains("user"));
    }
    REQUIRE(ids.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(ids[i] == "req-" + std::to_string(i));  // total order
    std::remove(path.c_str());
}

TEST_CASE("case-study script fixture loads and answers", "[llm]") {
    ScriptedClient client = load_script(std::string(PHENORAG_FIXTURES_DIR) + "/case_script.json");
    ChatRequest req;
    req.system = "";
    req.user = "You are a genetic counselor. ... 'patient with hypotonia and areflexia' ...";
    ChatResponse resp = client.complete(req);
    CHECK(resp.text.find("POTENTIAL_GENES:") != std::string::npos);
    CHECK(resp.text.find("'MTM1'") != std::string::npos);  // base ranking
}
