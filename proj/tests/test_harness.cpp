#include <doctest.h>

#include <sstream>

#include "crumq/core/errors.hpp"
#include "crumq/harness/harness.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace crumq;
using namespace crumq::harness;

namespace {

EvalRecord rec(const std::string& q, ResponseLabel label, std::optional<bool> correct = std::nullopt,
               const std::string& config = "cfg") {
    EvalRecord r;
    r.query_id = q;
    r.config_id = config;
    r.response_text = "r";
    r.label = label;
    if (label == ResponseLabel::attempted_answer) r.accuracy_judged = correct.value_or(false);
    return r;
}

Chunk text_chunk(const std::string& id, const std::string& text) {
    Chunk c;
    c.id = id;
    c.doc_id = "document_" + id;
    c.text = text;
    c.token_count = static_cast<int>(default_tokenizer().count(text));
    return c;
}

class Reverser final : public retrieval::Reranker {
  public:
    std::string id() const override { return "reverse"; }
    std::vector<retrieval::Hit> rerank(const std::string&, std::vector<retrieval::Hit> c,
                                       const std::map<std::string, std::string>&) override {
        std::reverse(c.begin(), c.end());
        return c;
    }
};

struct Rig {
    test::MockChat chat;
    std::shared_ptr<HashProjectionEmbedder> emb = test::hash_embedder(16);
    EmbeddingClient embedder{emb};
    std::vector<Chunk> chunks{text_chunk("a", "solar tariffs"), text_chunk("b", "wind farms"),
                              text_chunk("c", "battery storage"), text_chunk("d", "grid prices")};
    retrieval::VectorIndex index{1, ""};
    std::map<std::string, std::string> texts;
    retrieval::LexicalIndex lexical{chunks, default_tokenizer()};
    Reverser reverser;

    Rig() {
        index = retrieval::build_index(chunks, embedder);
        for (const auto& c : chunks) texts[c.id] = c.text;
        // The generator echoes its context so tests can see the passage order.
        chat.backend->set_script([](const ChatCall& call) -> std::optional<std::string> {
            if (call.prompt_id == "rag_answer") return call.inputs.at("context");
            return std::nullopt;
        });
    }
    RagSystem system(bool rerank = false) {
        return {&chat.client, &embedder, &index, &lexical, rerank ? &reverser : nullptr, &texts};
    }
};

}  // namespace

TEST_SUITE("harness") {
    TEST_CASE("run_rag retrieves, reranks and generates") {
        Rig rig;
        RagConfig cfg{"c1", "mock", "hash", RetrievalMode::vector, std::nullopt, Rewriting::none, 2};
        auto sys = rig.system();
        auto t = run_rag(cfg, sys, "solar tariffs");
        REQUIRE(t.retrieved_chunk_ids.size() == 2);
        CHECK(t.retrieved_chunk_ids[0] == "a");
        CHECK(t.search_text == "solar tariffs");
        CHECK(t.response.find("[C1] solar tariffs") != std::string::npos);

        auto rsys = rig.system(true);
        auto rcfg = cfg;
        rcfg.reranker = "reverse";
        auto r = run_rag(rcfg, rsys, "solar tariffs");
        CHECK(r.retrieved_chunk_ids ==
              std::vector<std::string>(t.retrieved_chunk_ids.rbegin(), t.retrieved_chunk_ids.rend()));
        CHECK(r.response.find("[C2] solar tariffs") != std::string::npos);

        rig.chat.backend->set_default("hyde_passage", "battery storage");
        auto hcfg = cfg;
        hcfg.rewriting = Rewriting::hyde;
        auto h = run_rag(hcfg, sys, "solar tariffs");
        CHECK(h.search_text == "battery storage");
        CHECK(h.retrieved_chunk_ids[0] == "c");

        auto ecfg = cfg;
        ecfg.retrieval = RetrievalMode::ensemble;
        auto e = run_rag(ecfg, sys, "solar tariffs");
        CHECK(e.retrieved_chunk_ids[0] == "a");
        RagSystem no_lex = sys;
        no_lex.lexical = nullptr;
        CHECK_THROWS_AS(check_config(ecfg, no_lex), ConfigError);
        CHECK_THROWS_AS(check_config(rcfg, sys), ConfigError);
    }

    TEST_CASE("provider failures mark the record errored") {
        Rig rig;
        rig.chat.backend->set_script(nullptr);
        rig.chat.backend->fail_next(1, false);
        RagConfig cfg{"c1", "mock", "hash", RetrievalMode::vector, std::nullopt, Rewriting::none, 2};
        auto sys = rig.system();
        Quarantine q;
        Judge judge(rig.chat.client, q);
        auto qa = CrumQA::make_seed(ContextGroup::make({"a", "b"}, 2, 0), "q?", "a", 2);
        auto r = evaluate_query(cfg, sys, judge, qa);
        REQUIRE(r);
        CHECK(r->error);
        CHECK(r->config_id == "c1");
    }

    TEST_CASE("response classification and accuracy") {
        test::MockChat m;
        Quarantine q;
        Judge judge(m.client, q);
        m.backend->add_rule({"classify_response", {{"response", "cannot answer"}}, std::nullopt, "refusal"});
        m.backend->add_rule({"classify_response", {{"response", "Could you specify"}}, std::nullopt, "clarification_request"});
        m.backend->set_default("classify_response", "attempted_answer");
        CHECK(classify_response(judge, "I cannot answer this from the provided documents.", "1") == ResponseLabel::refusal);
        CHECK(classify_response(judge, "Could you specify which merger you mean?", "2") ==
              ResponseLabel::clarification_request);
        CHECK(classify_response(judge, "The answer is 42.", "3") == ResponseLabel::attempted_answer);
        CHECK(harness::parse_response_label("Label: refusal") == ResponseLabel::refusal);
        CHECK_FALSE(harness::parse_response_label("something else"));

        m.backend->set_script([](const ChatCall& call) -> std::optional<std::string> {
            if (call.prompt_id != "answer_equivalence") return std::nullopt;
            return call.inputs.at("predicted") == call.inputs.at("target") ? "yes" : "no";
        });
        CHECK(judge_accuracy(judge, "q", "Paris", "Paris", "4") == true);
        CHECK(judge_accuracy(judge, "q", "Paris", "Rome", "5") == false);
    }

    TEST_CASE("unanswerability ratios by hand") {
        std::vector<EvalRecord> rs{rec("q1", ResponseLabel::refusal), rec("q2", ResponseLabel::refusal),
                                   rec("q3", ResponseLabel::clarification_request),
                                   rec("q4", ResponseLabel::attempted_answer, true)};
        auto m = compute_unanswerability_metrics(rs);
        CHECK(m.overall.unanswered == doctest::Approx(0.50));
        CHECK(m.overall.clarification == doctest::Approx(0.25));
        CHECK(m.overall.acceptable == doctest::Approx(0.75));
        CHECK(m.overall.accuracy == doctest::Approx(0.25));

        auto all_ref = compute_unanswerability_metrics({rec("q1", ResponseLabel::refusal)});
        CHECK(all_ref.overall.acceptable == 1.0);
        CHECK(all_ref.overall.accuracy == 0.0);
        auto wrong = compute_unanswerability_metrics({rec("q1", ResponseLabel::attempted_answer, false)});
        CHECK(wrong.overall.acceptable == 0.0);
        CHECK(wrong.overall.accuracy == 0.0);

        CHECK_THROWS_AS(compute_unanswerability_metrics({}), PreconditionError);
        CHECK_THROWS_AS(compute_unanswerability_metrics({rec("q1", ResponseLabel::refusal, std::nullopt, "a"),
                                                         rec("q2", ResponseLabel::refusal, std::nullopt, "b")}),
                        PreconditionError);
        auto err = rec("q9", ResponseLabel::refusal);
        err.error = "boom";
        auto with_err = compute_unanswerability_metrics({rec("q1", ResponseLabel::refusal), err});
        CHECK(with_err.overall.n == 1);
        CHECK(with_err.errored == 1);
        CHECK(with_err.error_rate == doctest::Approx(0.5));
        CHECK_THROWS_AS(compute_unanswerability_metrics({err}), PreconditionError);
    }

    TEST_CASE("ratio invariants (property)") {
        std::mt19937_64 rng(12);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<EvalRecord> rs;
            std::map<std::string, int> hops;
            std::size_t n = 1 + rng() % 40;
            for (std::size_t i = 0; i < n; ++i) {
                auto id = "q" + std::to_string(i);
                auto label = static_cast<ResponseLabel>(rng() % 3);
                rs.push_back(rec(id, label, rng() % 2 == 0));
                if (rng() % 5) hops[id] = 2 + static_cast<int>(rng() % 5);
            }
            auto m = compute_unanswerability_metrics(rs, hops);
            CHECK(m.overall.acceptable == doctest::Approx(m.overall.unanswered + m.overall.clarification).epsilon(1e-12));
            for (double x : {m.overall.unanswered, m.overall.clarification, m.overall.acceptable, m.overall.accuracy}) {
                CHECK(x >= 0.0);
                CHECK(x <= 1.0);
            }
            double weighted = 0;
            std::size_t total = 0;
            for (const auto& [h, r] : m.by_hop) {
                weighted += r.acceptable * r.n;
                total += r.n;
                CHECK(r.acceptable == doctest::Approx(r.unanswered + r.clarification).epsilon(1e-12));
            }
            CHECK(total == n);
            CHECK(weighted / n == doctest::Approx(m.overall.acceptable).epsilon(1e-12));
        }
    }

    TEST_CASE("probe partitions") {
        auto qa = CrumQA::make_seed(ContextGroup::make({"c1", "c2"}, 2, 0), "q", "a", 2);
        auto two = build_dire_probe(qa, {"c1", "c2"}, 1);
        REQUIRE(two);
        CHECK(two->first.chunk_ids == std::vector<std::string>{"c1"});
        CHECK(two->second.chunk_ids == std::vector<std::string>{"c2"});
        CHECK_FALSE(build_dire_probe(qa, {"c1"}, 1));

        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 200; ++trial) {
            std::size_t n = 2 + rng() % 5;
            std::vector<std::string> ids;
            for (std::size_t i = 0; i < n; ++i) ids.push_back("k" + std::to_string(i));
            auto seed = rng();
            auto p = build_dire_probe(qa, ids, seed);
            REQUIRE(p);
            std::set<std::string> a(p->first.chunk_ids.begin(), p->first.chunk_ids.end());
            std::set<std::string> b(p->second.chunk_ids.begin(), p->second.chunk_ids.end());
            std::set<std::string> u = a;
            u.insert(b.begin(), b.end());
            CHECK(u == std::set<std::string>(ids.begin(), ids.end()));
            CHECK(a.size() + b.size() == n);
            CHECK(std::min(a.size(), b.size()) == n / 2);
            CHECK(p->first.part_index == 0);
            CHECK(p->second.part_index == 1);
            auto again = build_dire_probe(qa, ids, seed);
            CHECK(again->first.chunk_ids == p->first.chunk_ids);
        }
    }

    TEST_CASE("F1 examples") {
        CHECK(token_f1("a b", "b c") == doctest::Approx(0.5));
        CHECK(token_f1("The Answer!", "the answer") == 1.0);
        CHECK(token_f1("x", "y") == 0.0);
        CHECK(token_f1("", "") == 1.0);
        CHECK(token_f1("", "y") == 0.0);
        CHECK(support_f1({"a"}, {"a", "b"}) == doctest::Approx(2.0 / 3));
        CHECK(support_f1({"a", "b"}, {"b", "a"}) == 1.0);
        CHECK(support_f1({"a"}, {"b"}) == 0.0);
        CHECK(support_f1({}, {}) == 1.0);
    }

    TEST_CASE("F1 matches the multiset oracle (property)") {
        std::mt19937_64 rng(19);
        const std::vector<std::string> vocab{"a", "b", "c", "d"};
        auto phrase = [&] {
            std::string s;
            std::size_t n = rng() % 5;
            for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + vocab[rng() % vocab.size()];
            return s;
        };
        for (int i = 0; i < 500; ++i) {
            auto p = phrase(), g = phrase();
            CHECK(token_f1(p, g) == doctest::Approx(oracle::multiset_f1(p, g)).epsilon(1e-12));
            CHECK(token_f1(p, g) == doctest::Approx(token_f1(g, p)).epsilon(1e-12));
            auto w1 = oracle::words(p), w2 = oracle::words(g);
            std::set<std::string> s1(w1.begin(), w1.end()), s2(w2.begin(), w2.end());
            CHECK(support_f1(s1, s2) == doctest::Approx(oracle::set_f1(s1, s2)).epsilon(1e-12));
        }
    }

    TEST_CASE("cheatability ratios") {
        auto r = compute_cheatability("m", CheatTask::answer_prediction, {1.0, 1.0}, {0.5, 0.5});
        CHECK(r.ratio == doctest::Approx(0.5));
        CHECK(compute_cheatability("m", CheatTask::answer_prediction, {0.3, 0.7}, {0.3, 0.7}).ratio == 1.0);
        CHECK_THROWS(compute_cheatability("m", CheatTask::answer_prediction, {0.0, 0.0}, {0.1, 0.2}));
        CHECK_THROWS(compute_cheatability("m", CheatTask::answer_prediction, {1.0}, {0.1, 0.2}));
        CHECK(probe_credit(0.2, 0.7, ProbeCredit::max) == 0.7);
        CHECK(parse_probe_credit("max") == ProbeCredit::max);
        std::mt19937_64 rng(3);
        for (int i = 0; i < 100; ++i) {
            std::vector<double> x(1 + rng() % 20);
            for (auto& v : x) v = static_cast<double>(rng() % 100 + 1) / 100.0;
            CHECK(compute_cheatability("m", CheatTask::support_identification, x, x).ratio ==
                  doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    TEST_CASE("cheatability scoring over probes") {
        auto c1 = text_chunk("c1", "Alpha fact."), c2 = text_chunk("c2", "Beta fact.");
        std::map<std::string, const Chunk*> chunks{{"c1", &c1}, {"c2", &c2}};
        auto ctx = ContextGroup::make({"c1", "c2"}, 2, 0);
        auto qa = CrumQA::make_seed(ctx, "what links alpha and beta?", "alpha beta", 2);
        qa.cot = "1. [C1]\n2. [C2]";
        auto probe = build_dire_probe(qa, ctx.chunk_ids, 1);
        REQUIRE(probe);
        test::MockChat m;
        m.backend->set_script([](const ChatCall& call) -> std::optional<std::string> {
            const auto& text = call.inputs.at("chunks");
            bool a = text.find("Alpha") != std::string::npos, b = text.find("Beta") != std::string::npos;
            if (a && b) return "ANSWER: alpha beta\nSUPPORT: [C1], [C2]";
            return std::string("ANSWER: ") + (a ? "alpha" : "beta") + "\nSUPPORT: [C1]";
        });
        Quarantine q;
        Judge judge(m.client, q);
        auto s = score_cheatability(judge, {qa}, {{ctx.id, ctx}}, chunks, {probe->first, probe->second},
                                    ProbeCredit::max);
        REQUIRE(s.qa_ids.size() == 1);
        CHECK(s.answer_full[0] == 1.0);
        CHECK(s.answer_probe[0] == doctest::Approx(oracle::multiset_f1("alpha", "alpha beta")));
        CHECK(s.support_full[0] == 1.0);
        CHECK(s.support_probe[0] == 1.0);
        CHECK(parse_answer_support("ANSWER: x\nSUPPORT: [C3]", 2) == std::nullopt);
    }

    TEST_CASE("Holm step-down") {
        auto two = holm_bonferroni({{"a", 0.01}, {"b", 0.04}});
        CHECK(two[0].second);
        CHECK(two[1].second);
        CHECK_FALSE(holm_bonferroni({{"a", 0.06}})[0].second);
        CHECK(holm_bonferroni({}).empty());
        auto stop = holm_bonferroni({{"a", 0.04}, {"b", 0.001}, {"c", 0.03}});
        CHECK(stop[1].second);
        CHECK_FALSE(stop[0].second);
        CHECK_FALSE(stop[2].second);
    }

    TEST_CASE("Holm agrees with its definition and is monotone (property)") {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> u(0.0, 0.08);
        for (int trial = 0; trial < 300; ++trial) {
            std::size_t m = rng() % 8;
            std::vector<std::pair<std::string, double>> ps;
            std::vector<double> raw;
            for (std::size_t i = 0; i < m; ++i) {
                raw.push_back(u(rng));
                ps.emplace_back("h" + std::to_string(i), raw.back());
            }
            auto got = holm_bonferroni(ps, 0.05);
            auto expect = oracle::holm(raw, 0.05);
            REQUIRE(got.size() == m);
            for (std::size_t i = 0; i < m; ++i) {
                CHECK(got[i].first == ps[i].first);
                CHECK(got[i].second == expect[i]);
            }
            auto shuffled = ps;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            std::map<std::string, bool> by_label;
            for (const auto& [l, r] : holm_bonferroni(shuffled, 0.05)) by_label[l] = r;
            for (const auto& [l, r] : got) CHECK(by_label[l] == r);
            if (m == 0) continue;
            auto lowered = ps;
            lowered[rng() % m].second /= 2;
            auto after = holm_bonferroni(lowered, 0.05);
            for (std::size_t i = 0; i < m; ++i)
                if (got[i].second) CHECK(after[i].second);
        }
    }

    TEST_CASE("paired bootstrap") {
        std::vector<double> ones(100, 1.0), zeros(100, 0.0);
        const int b = 2000;
        CHECK(paired_bootstrap(ones, zeros, b, 1) == doctest::Approx(1.0 / (b + 1)).epsilon(1e-12));
        CHECK(paired_bootstrap(ones, zeros, b, 1) < 0.01);
        CHECK(paired_bootstrap(ones, ones, b, 1) >= 0.9);
        CHECK_THROWS_AS(paired_bootstrap(ones, zeros, 10, 1), PreconditionError);

        std::mt19937_64 rng(6);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> x(5 + rng() % 50), y(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] = static_cast<double>(rng() % 2);
                y[i] = static_cast<double>(rng() % 2);
            }
            auto seed = rng();
            auto p = paired_bootstrap(x, y, 1000, seed);
            CHECK(p == paired_bootstrap_serial(x, y, 1000, seed));
            CHECK(p == paired_bootstrap(x, y, 1000, seed));
            CHECK(p >= 1.0 / 1001);
            CHECK(p <= 1.0);
        }
    }

    TEST_CASE("paired significance aligns queries") {
        std::vector<EvalRecord> a, b;
        for (int i = 0; i < 100; ++i) {
            a.push_back(rec("q" + std::to_string(i), ResponseLabel::refusal, std::nullopt, "A"));
            b.push_back(rec("q" + std::to_string(99 - i), ResponseLabel::attempted_answer, false, "B"));
        }
        CHECK(paired_significance(a, b, Metric::acceptable, 1000, 3) < 0.01);
        CHECK(paired_significance(a, a, Metric::acceptable, 1000, 3) >= 0.9);
        b.pop_back();
        CHECK_THROWS_AS(paired_significance(a, b, Metric::acceptable, 1000, 3), PreconditionError);
        CHECK(metric_value(rec("x", ResponseLabel::clarification_request), Metric::clarification) == 1.0);
        CHECK(parse_metric("accuracy") == Metric::accuracy);
    }

    TEST_CASE("query sampling") {
        std::vector<std::string> ids;
        for (int i = 0; i < 30; ++i) ids.push_back("q" + std::to_string(i));
        auto all = sample_ids(ids, 30, 1);
        auto sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        CHECK(all == sorted);
        CHECK(sample_ids(ids, 10, 4) == sample_ids(ids, 10, 4));
        CHECK(sample_ids(ids, 10, 4).size() == 10);
        CHECK(sample_ids(ids, 0, 4).empty());
        CHECK_THROWS_AS(sample_ids(ids, 31, 4), PreconditionError);
        auto s = sample_ids(ids, 10, 4);
        CHECK(std::is_sorted(s.begin(), s.end()));
        CHECK(std::set<std::string>(s.begin(), s.end()).size() == 10);
    }

    TEST_CASE("report formatting") {
        auto m = compute_unanswerability_metrics({rec("q1", ResponseLabel::refusal), rec("q2", ResponseLabel::attempted_answer, true)});
        auto csv = format_metrics_csv({m});
        CHECK(csv.find("cfg") != std::string::npos);
        CHECK(format_metrics_table({m}).find("0.500") != std::string::npos);
        auto c = compute_cheatability("m", CheatTask::answer_prediction, {1.0}, {0.5});
        CHECK(format_cheatability_csv({c}).find("answer_prediction") != std::string::npos);
    }
}
