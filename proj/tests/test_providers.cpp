#include <doctest.h>

#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"
#include "crumq/core/jsonl.hpp"
#include "crumq/providers/http.hpp"
#include "crumq/providers/judge.hpp"
#include "local_server.hpp"
#include "support.hpp"

using namespace crumq;
using nlohmann::json;

namespace {

const Slots kYesNo{{"topic", "t"}, {"request", "r"}, {"chunk", "c"}};

class BadEmbedder final : public Embedder {
  public:
    std::string identity() const override { return "bad"; }
    std::vector<Vector> embed(const std::vector<std::string>& texts) override {
        std::vector<Vector> out;
        for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(Vector(i == 1 ? 3 : 4, 1.0f));
        return out;
    }
};

}  // namespace

TEST_SUITE("providers") {
    TEST_CASE("mock lookup order: exact, rules, defaults, then error") {
        test::MockChat m;
        m.backend->set_default("chunk_relevance", "no");
        m.backend->add_rule({"chunk_relevance", {{"chunk", "special"}}, std::nullopt, "yes"});
        m.backend->add_exact("chunk_relevance", kYesNo, "exact");
        CHECK(m.client.chat({"chunk_relevance", kYesNo}).text == "exact");
        CHECK(m.client.chat({"chunk_relevance", {{"topic", "t"}, {"request", "r"}, {"chunk", "a special one"}}}).text == "yes");
        CHECK(m.client.chat({"chunk_relevance", {{"topic", "t"}, {"request", "r"}, {"chunk", "other"}}}).text == "no");
        try {
            m.client.chat({"verify_answerable", {{"question", "q"}, {"chunks", "c"}}});
            FAIL("expected ProviderError");
        } catch (const ProviderError& e) {
            CHECK_FALSE(e.retryable());
        }
    }

    TEST_CASE("mock rules substitute slots and honour strictness") {
        test::MockChat m;
        m.backend->add_rule({"hyde_passage", {}, true, "strict {{query}}"});
        m.backend->add_rule({"hyde_passage", {}, std::nullopt, "plain {{query}} {{missing}}"});
        CHECK(m.client.chat({"hyde_passage", {{"query", "q"}}}).text == "plain q {{missing}}");
        ChatCall strict{"hyde_passage", {{"query", "q"}}};
        strict.strict = true;
        CHECK(m.client.chat(strict).text == "strict q");
    }

    TEST_CASE("mock recording captures exact keys") {
        test::MockChat m;
        m.backend->set_default("hyde_passage", "p");
        m.backend->set_recording(true);
        m.client.chat({"hyde_passage", {{"query", "q"}}});
        auto rec = m.backend->recorded();
        REQUIRE(rec.size() == 1);
        CHECK(rec.begin()->first == MockChatBackend::exact_key({"hyde_passage", {{"query", "q"}}}));
        test::MockChat m2;
        m2.backend->load_json(json{{"exact", rec}});
        CHECK(m2.client.chat({"hyde_passage", {{"query", "q"}}}).text == "p");
        CHECK_THROWS_AS(m2.client.chat({"hyde_passage", {{"query", "other"}}}), ProviderError);
    }

    TEST_CASE("unregistered prompt or missing slot fails before the backend") {
        test::MockChat m;
        m.backend->set_default("hyde_passage", "p");
        CHECK_THROWS_AS(m.client.chat({"no_such_prompt", {}}), PreconditionError);
        CHECK_THROWS_AS(m.client.chat({"hyde_passage", {}}), PreconditionError);
        CHECK(m.backend->calls() == 0);
    }

    TEST_CASE("second identical call is served from the cache") {
        test::TempDir dir;
        auto backend = std::make_shared<MockChatBackend>("c");
        backend->set_default("hyde_passage", "passage");
        auto cache = std::make_shared<CallCache>(dir.path());
        ChatClient client(backend, std::make_shared<PromptRegistry>(PromptRegistry::defaults()), cache);
        auto a = client.chat({"hyde_passage", {{"query", "q"}}});
        auto b = client.chat({"hyde_passage", {{"query", "q"}}});
        CHECK(a.text == b.text);
        CHECK(b.usage.cached);
        CHECK(backend->calls() == 1);
        CHECK(client.cache_hits() == 1);

        // A fresh client over the same directory still hits.
        ChatClient again(backend, std::make_shared<PromptRegistry>(PromptRegistry::defaults()), cache);
        again.chat({"hyde_passage", {{"query", "q"}}});
        CHECK(backend->calls() == 1);
    }

    TEST_CASE("corrupt cache entries are discarded and re-issued") {
        test::TempDir dir;
        auto backend = std::make_shared<MockChatBackend>("c");
        backend->set_default("hyde_passage", "passage");
        auto cache = std::make_shared<CallCache>(dir.path());
        ChatClient client(backend, std::make_shared<PromptRegistry>(PromptRegistry::defaults()), cache);
        ChatCall call{"hyde_passage", {{"query", "q"}}};
        client.chat(call);
        auto path = cache->path_for(client.call_digest(call));
        REQUIRE(std::filesystem::exists(path));
        auto text = read_file(path);
        text[text.find("passage")] = 'X';
        write_file_atomic(path, text);
        CHECK(client.chat(call).text == "passage");
        CHECK(backend->calls() == 2);
    }

    TEST_CASE("retryable failures are retried, others are not") {
        test::MockChat m;
        m.backend->set_default("hyde_passage", "ok");
        m.backend->fail_next(2, true);
        CHECK(m.client.chat({"hyde_passage", {{"query", "q"}}}).text == "ok");
        CHECK(m.backend->calls() == 3);
        m.backend->fail_next(5, true);
        CHECK_THROWS_AS(m.client.chat({"hyde_passage", {{"query", "q2"}}}), ProviderError);
        m.backend->fail_next(0);
        auto before = m.backend->calls();
        m.backend->fail_next(1, false);
        CHECK_THROWS_AS(m.client.chat({"hyde_passage", {{"query", "q3"}}}), ProviderError);
        CHECK(m.backend->calls() == before + 1);
    }

    TEST_CASE("scripted refusal surfaces as RefusalError") {
        test::MockChat m;
        MockRule r{"hyde_passage", {}, std::nullopt, ""};
        r.refuse = true;
        m.backend->add_rule(r);
        CHECK_THROWS_AS(m.client.chat({"hyde_passage", {{"query", "q"}}}), RefusalError);
    }

    TEST_CASE("prompt registry renders, digests and overrides") {
        auto reg = PromptRegistry::defaults();
        auto text = reg.render("hyde_passage", {{"query", "QUERY"}});
        CHECK(text.find("QUERY") != std::string::npos);
        CHECK(reg.render("chunk_relevance", kYesNo, true).size() > reg.render("chunk_relevance", kYesNo).size());
        auto before = reg.digest();
        test::TempDir dir;
        write_file_atomic(dir / "hyde.toml",
                          "id = \"hyde_passage\"\nslots = [\"query\"]\noutput = \"free_text\"\ntemplate = \"Say {{query}}\"\n");
        reg.load_directory(dir.path());
        CHECK(reg.render("hyde_passage", {{"query", "x"}}) == "Say x");
        CHECK(reg.digest() != before);
        CHECK_THROWS(parse_prompt_contract("id = \"x\"\nslots = [\"a\"]\noutput = \"nope\"\ntemplate = \"{{a}}\"", "t"));
        CHECK_THROWS(parse_prompt_contract("id = \"x\"\nslots = [\"a\"]\noutput = \"free_text\"\ntemplate = \"{{b}}\"", "t"));
    }

    TEST_CASE("hash embeddings are deterministic unit vectors") {
        EmbeddingClient client(test::hash_embedder(32));
        auto v = client.embed({"x", "solar tariffs", "x"});
        REQUIRE(v.size() == 3);
        CHECK(v[0] == v[2]);
        CHECK(dot(v[0], v[0]) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(v[1].size() == 32);
        EmbeddingClient other(test::hash_embedder(32));
        CHECK(other.embed_one("solar tariffs") == v[1]);
        CHECK_THROWS_AS(client.embed({}), PreconditionError);
    }

    TEST_CASE("embedding overrides and dimension errors") {
        auto e = test::hash_embedder(2);
        e->set_override("a", {3.0f, 4.0f});
        EmbeddingClient client(e);
        auto v = client.embed_one("a");
        CHECK(v[0] == doctest::Approx(0.6));
        CHECK(v[1] == doctest::Approx(0.8));

        EmbeddingClient bad(std::make_shared<BadEmbedder>());
        try {
            bad.embed({"p", "q", "r"});
            FAIL("expected an error");
        } catch (const Error& err) {
            CHECK(std::string(err.what()).find("index 1") != std::string::npos);
        }
    }

    TEST_CASE("judge verdicts and quarantine") {
        test::MockChat m;
        Quarantine q;
        Judge judge(m.client, q);
        m.backend->add_rule({"chunk_relevance", {{"chunk", "Y"}}, std::nullopt, "Yes."});
        m.backend->add_rule({"chunk_relevance", {{"chunk", "N"}}, std::nullopt, "no"});
        m.backend->add_rule({"chunk_relevance", {{"chunk", "G"}}, std::nullopt, "perhaps"});
        m.backend->add_rule({"chunk_relevance", {{"chunk", "F"}}, false, "hmm"});
        m.backend->add_rule({"chunk_relevance", {{"chunk", "F"}}, true, "yes"});
        auto ask = [&](const std::string& c) {
            return judge.binary("chunk_relevance", {{"topic", "t"}, {"request", "r"}, {"chunk", c}}, "item-" + c);
        };
        CHECK(ask("Y") == true);
        CHECK(ask("N") == false);
        CHECK(ask("F") == true);
        CHECK_FALSE(ask("G").has_value());
        REQUIRE(q.size() == 1);
        CHECK(q.contains("item-G"));
        CHECK(q.entries()[0].outputs.size() == 2);

        Slots likert{{"question", "q"}, {"answer", "a"}, {"chunks", "c"}, {"setting", "s"}};
        m.backend->set_default("quality_answer_correctness", "2");
        CHECK(judge.likert("quality_answer_correctness", likert, "l") == 2);
        m.backend->set_default("quality_answer_correctness", "0");
        CHECK(judge.likert("quality_answer_correctness", likert, "l0") == 0);
        m.backend->set_default("quality_answer_correctness", "3");
        CHECK_FALSE(judge.likert("quality_answer_correctness", likert, "l3").has_value());
        CHECK(q.contains("l3"));
        CHECK_THROWS_AS(judge.binary("quality_answer_correctness", likert, "x"), PreconditionError);
    }

    TEST_CASE("verdict parsers") {
        CHECK(parse_yes_no("YES") == true);
        CHECK(parse_yes_no(" no.\n") == false);
        CHECK_FALSE(parse_yes_no("maybe yes").has_value());
        CHECK(parse_likert("1") == 1);
        CHECK(parse_likert("Score: 2") == 2);
        CHECK_FALSE(parse_likert("5").has_value());
    }

    TEST_CASE("base url splitting") {
        auto b = split_base_url("https://api.example.com:8443/v1");
        CHECK(b.origin == "https://api.example.com:8443");
        CHECK(b.path_prefix == "/v1");
        CHECK(split_base_url("http://h").path_prefix.empty());
    }

    TEST_CASE("OpenAI-compatible chat and embeddings over HTTP") {
        int chat_hits = 0;
        test::LocalServer server([&](httplib::Server& s) {
            s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
                ++chat_hits;
                auto body = json::parse(req.body);
                CHECK(req.get_header_value("Authorization") == "Bearer k");
                auto content = body["messages"][0]["content"].get<std::string>();
                if (content.find("LIMIT") != std::string::npos) {
                    res.status = 429;
                    return;
                }
                if (content.find("BAD") != std::string::npos) {
                    res.status = 400;
                    return;
                }
                json msg{{"role", "assistant"}, {"content", "echo " + body["model"].get<std::string>()}};
                std::string finish = content.find("FILTER") != std::string::npos ? "content_filter" : "stop";
                res.set_content(json{{"choices", {{{"message", msg}, {"finish_reason", finish}}}},
                                     {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 2}}}}
                                    .dump(),
                                "application/json");
            });
            s.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
                auto body = json::parse(req.body);
                json data = json::array();
                int i = 0;
                for (const auto& t : body["input"]) {
                    data.push_back({{"index", i}, {"embedding", {double(t.get<std::string>().size()), 1.0}}});
                    ++i;
                }
                res.set_content(json{{"data", data}}.dump(), "application/json");
            });
        });
        ProviderCredentials creds{"k", server.url() + "/v1"};
        OpenAICompatibleChat chat("local", "m1", creds);
        CHECK(chat.identity() == "local/m1");
        ChatCall call{"hyde_passage", {{"query", "q"}}};
        ChatRequest req{call, "hello", 0.0, 16};
        auto r = chat.complete(req);
        CHECK(r.text == "echo m1");
        CHECK(r.usage.prompt_tokens == 3);

        ChatRequest limited{call, "LIMIT", 0.0, 16};
        try {
            chat.complete(limited);
            FAIL("expected ProviderError");
        } catch (const ProviderError& e) {
            CHECK(e.retryable());
        }
        ChatRequest bad{call, "BAD", 0.0, 16};
        try {
            chat.complete(bad);
            FAIL("expected ProviderError");
        } catch (const ProviderError& e) {
            CHECK_FALSE(e.retryable());
        }
        ChatRequest filtered{call, "FILTER", 0.0, 16};
        CHECK_THROWS_AS(chat.complete(filtered), RefusalError);

        OpenAICompatibleEmbedder emb("local", "e1", creds);
        auto v = emb.embed({"ab", "abcd"});
        REQUIRE(v.size() == 2);
        CHECK(v[1][0] == 4.0f);
    }

    TEST_CASE("credentials come from the environment") {
        setenv("CRUMQ_TESTPROV_API_KEY", "secret", 1);
        unsetenv("CRUMQ_TESTPROV_BASE_URL");
        auto c = credentials_from_env("testprov", "http://default");
        CHECK(c.api_key == "secret");
        CHECK(c.base_url == "http://default");
        setenv("CRUMQ_TESTPROV_BASE_URL", "http://override", 1);
        CHECK(credentials_from_env("testprov", "http://default").base_url == "http://override");
    }
}
