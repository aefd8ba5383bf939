#include <doctest.h>

#include <cmath>

#include "crumq/core/errors.hpp"
#include "crumq/topics/topics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace crumq;

namespace {

Request make_request() {
    auto gold = DocumentRef::make(Origin::corpus, "k1", "T", std::nullopt, std::nullopt, "body");
    return {"req-1", "How will tariffs affect solar?", {gold.id}};
}

Topic with_embedding(std::string phrase, Vector v) {
    auto t = Topic::make(std::move(phrase), "req-1", std::nullopt);
    normalize(v);
    t.embedding = std::move(v);
    return t;
}

}  // namespace

TEST_SUITE("topics") {
    TEST_CASE("parse_keyphrases splits, trims and collapses") {
        CHECK(topics::parse_keyphrases("solar tariffs; battery supply chains") ==
              std::vector<std::string>{"solar tariffs", "battery supply chains"});
        CHECK(topics::parse_keyphrases("- \"A b\"\n* a  B\n\n; c") == std::vector<std::string>{"A b", "c"});
        CHECK(topics::parse_keyphrases("  \n ; ").empty());
    }

    TEST_CASE("extraction yields one initial topic per phrase") {
        test::MockChat m;
        m.backend->set_default("extract_keyphrases", "solar tariffs; battery supply chains; Solar Tariffs");
        auto req = make_request();
        auto ts = topics::extract_request_keyphrases(m.client, req);
        REQUIRE(ts.size() == 2);
        for (const auto& t : ts) {
            CHECK(t.stage == TopicStage::initial);
            CHECK(t.origin_request_id == "req-1");
        }
        m.backend->set_default("extract_keyphrases", "");
        CHECK(topics::extract_request_keyphrases(m.client, req).empty());
        CHECK_THROWS_AS(topics::extract_request_keyphrases(m.client, Request{"r", "  ", {}}), PreconditionError);
    }

    TEST_CASE("grounding records the gold document") {
        test::MockChat m;
        auto req = make_request();
        auto gold = DocumentRef::make(Origin::corpus, "k1", "T", std::nullopt, std::nullopt, "body");
        auto t = Topic::make("solar tariffs", "req-1", std::nullopt);
        m.backend->set_default("ground_topic", "module import duties");
        auto g = topics::ground_topics(m.client, t, gold, req);
        REQUIRE(g.size() == 1);
        CHECK(g[0].grounding_doc_id == gold.id);
        CHECK(g[0].stage == TopicStage::grounded);

        m.backend->set_default("ground_topic", "");
        CHECK(topics::ground_topics(m.client, t, gold, req).empty());

        auto other = DocumentRef::make(Origin::corpus, "k2", "T", std::nullopt, std::nullopt, "body");
        CHECK_THROWS_AS(topics::ground_topics(m.client, t, other, req), PreconditionError);
        auto ext = DocumentRef::make(Origin::arxiv, "u", "T", std::string("u"), std::nullopt, "body");
        CHECK_THROWS_AS(topics::ground_topics(m.client, t, ext, req), PreconditionError);
        CHECK_THROWS_AS(topics::ground_topics(m.client, g[0], gold, req), PreconditionError);
    }

    TEST_CASE("dedup of identical and orthogonal topics") {
        auto a = with_embedding("a", {1, 0});
        auto a2 = with_embedding("A ", {1, 0});
        CHECK(a.id == a2.id);
        CHECK(topics::deduplicate_topics({a, a2}).size() == 1);
        auto b = with_embedding("b", {0, 1});
        auto c = with_embedding("c", {1, 0});
        CHECK(topics::deduplicate_topics({a, b}).size() == 2);
        CHECK(topics::deduplicate_topics({a, c}).size() == 1);
        auto bare = Topic::make("x", "req-1", std::nullopt);
        CHECK_THROWS_WITH_AS(topics::deduplicate_topics({bare}), doctest::Contains(bare.id.c_str()), PreconditionError);
        CHECK_THROWS_AS(topics::deduplicate_topics({a}, 0.0), PreconditionError);
    }

    TEST_CASE("greedy dedup keeps the first and third of a chain") {
        // sim(first, second) = sim(second, third) = 0.96, sim(first, third) = 0.85.
        std::vector<Vector> vs{{1, 0, 0}, {0.96f, 0.28f, 0}, {0.85f, 0.5142857f, 0.1140614f}};
        std::vector<Topic> ts;
        for (const char* p : {"p", "q", "r"}) ts.push_back(Topic::make(p, "req-1", std::nullopt));
        std::sort(ts.begin(), ts.end(), [](const Topic& x, const Topic& y) { return x.id < y.id; });
        for (std::size_t i = 0; i < 3; ++i) {
            normalize(vs[i]);
            ts[i].embedding = vs[i];
        }
        CHECK(dot(vs[0], vs[1]) == doctest::Approx(0.96).epsilon(1e-4));
        CHECK(dot(vs[1], vs[2]) == doctest::Approx(0.96).epsilon(1e-4));
        CHECK(dot(vs[0], vs[2]) == doctest::Approx(0.85).epsilon(1e-4));
        auto kept = topics::deduplicate_topics({ts[2], ts[0], ts[1]});
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].id == ts[0].id);
        CHECK(kept[1].id == ts[2].id);
    }

    TEST_CASE("greedy scan over given similarities") {
        // Cosines no set of unit vectors can realize; the scan takes them as given.
        const double sim[3][3] = {{1, 0.96, 0.50}, {0.96, 1, 0.96}, {0.50, 0.96, 1}};
        auto kept = topics::greedy_keep(3, [&](std::size_t i, std::size_t j) { return sim[i][j]; }, 0.95);
        CHECK(kept == std::vector<std::size_t>{0, 2});
        CHECK(topics::greedy_keep(0, [](std::size_t, std::size_t) { return 1.0; }, 0.95).empty());
        CHECK(topics::greedy_keep(4, [](std::size_t, std::size_t) { return 1.0; }, 0.95) == std::vector<std::size_t>{0});
    }

    TEST_CASE("dedup matches the greedy oracle and is idempotent (property)") {
        std::mt19937_64 rng(21);
        std::normal_distribution<double> gauss;
        for (int trial = 0; trial < 100; ++trial) {
            std::size_t n = 1 + rng() % 12;
            std::vector<Topic> ts;
            // Few directions with small jitter so near-duplicates are common.
            std::vector<Vector> centers(3, Vector(4));
            for (auto& c : centers)
                for (auto& x : c) x = static_cast<float>(gauss(rng));
            for (std::size_t i = 0; i < n; ++i) {
                Vector v = centers[rng() % 3];
                for (auto& x : v) x += static_cast<float>(0.2 * gauss(rng));
                ts.push_back(with_embedding("t" + std::to_string(trial) + "_" + std::to_string(i), v));
            }
            const double thr = 0.9;
            auto kept = topics::deduplicate_topics(ts, thr);

            auto sorted = ts;
            std::sort(sorted.begin(), sorted.end(), [](const Topic& x, const Topic& y) { return x.id < y.id; });
            std::vector<std::vector<double>> sim(n, std::vector<double>(n));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) sim[i][j] = dot(*sorted[i].embedding, *sorted[j].embedding);
            auto expect = oracle::greedy_keep(sim, thr);
            REQUIRE(kept.size() == expect.size());
            for (std::size_t i = 0; i < kept.size(); ++i) CHECK(kept[i].id == sorted[expect[i]].id);

            for (std::size_t i = 0; i < kept.size(); ++i)
                for (std::size_t j = i + 1; j < kept.size(); ++j)
                    CHECK(dot(*kept[i].embedding, *kept[j].embedding) < thr);

            auto doubled = ts;
            doubled.insert(doubled.end(), ts.begin(), ts.end());
            auto again = topics::deduplicate_topics(doubled, thr);
            REQUIRE(again.size() == kept.size());
            for (std::size_t i = 0; i < kept.size(); ++i) CHECK(again[i].id == kept[i].id);
        }
    }

    TEST_CASE("embed_topics fills unit embeddings") {
        EmbeddingClient e(test::hash_embedder(16));
        std::vector<Topic> ts{Topic::make("solar tariffs", "r", std::nullopt), Topic::make("wind", "r", std::nullopt)};
        topics::embed_topics(e, ts);
        for (const auto& t : ts) {
            REQUIRE(t.embedding);
            CHECK(dot(*t.embedding, *t.embedding) == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
}
