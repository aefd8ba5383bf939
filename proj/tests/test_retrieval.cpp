#include <doctest.h>

#include <cmath>

#include "crumq/core/errors.hpp"
#include "crumq/core/jsonl.hpp"
#include "crumq/retrieval/retrieval.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace crumq;
using namespace crumq::retrieval;

namespace {

Vector unit_at(double cosine) {
    Vector v{static_cast<float>(cosine), static_cast<float>(std::sqrt(1.0 - cosine * cosine))};
    normalize(v);
    return v;
}

Vector random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g;
    Vector v(dim);
    for (auto& x : v) x = static_cast<float>(g(rng));
    normalize(v);
    return v;
}

Chunk text_chunk(const std::string& id, const std::string& text) {
    Chunk c;
    c.id = id;
    c.doc_id = "document_" + id;
    c.text = text;
    c.token_count = static_cast<int>(default_tokenizer().count(text));
    return c;
}

class Reverser final : public Reranker {
  public:
    std::string id() const override { return "reverse"; }
    std::vector<Hit> rerank(const std::string&, std::vector<Hit> c, const std::map<std::string, std::string>&) override {
        std::reverse(c.begin(), c.end());
        return c;
    }
};

}  // namespace

TEST_SUITE("retrieval") {
    TEST_CASE("five-score example breaks ties by id") {
        VectorIndex idx(2, "test");
        const std::vector<std::pair<std::string, double>> entries{
            {"e_low", 0.1}, {"e_b", 0.7}, {"e_top", 0.9}, {"e_a", 0.7}, {"e_mid", 0.2}};
        for (const auto& [id, c] : entries) idx.add(id, unit_at(c));
        auto hits = idx.search(Vector{1, 0}, 3);
        REQUIRE(hits.size() == 3);
        CHECK(hits[0].chunk_id == "e_top");
        CHECK(hits[1].chunk_id == "e_a");
        CHECK(hits[2].chunk_id == "e_b");
        CHECK(hits[0].score == doctest::Approx(0.9).epsilon(1e-6));
        CHECK(idx.search(Vector{1, 0}, 99).size() == 5);
    }

    TEST_CASE("index preconditions") {
        VectorIndex idx(2, "test");
        idx.add("a", Vector{1, 0});
        CHECK_THROWS_AS(idx.add("a", Vector{0, 1}), PreconditionError);
        CHECK_THROWS_AS(idx.add("b", Vector{1, 0, 0}), PreconditionError);
        CHECK_THROWS_AS(idx.add("c", Vector{2, 0}), PreconditionError);
        EmbeddingClient e(test::hash_embedder(8));
        CHECK_THROWS_AS(build_index({}, e), PreconditionError);
        CHECK_THROWS_AS(build_index({text_chunk("x", "a"), text_chunk("x", "b")}, e), PreconditionError);
        CHECK(build_index({text_chunk("x", "a"), text_chunk("y", "b"), text_chunk("z", "c")}, e).size() == 3);
        CHECK_THROWS_AS(search_topk(build_index({text_chunk("x", "a")}, e), e, "q", 0), PreconditionError);
    }

    TEST_CASE("search matches a full cosine scan (property)") {
        std::mt19937_64 rng(31);
        for (int trial = 0; trial < 200; ++trial) {
            std::size_t dim = 1 + rng() % 16, n = 1 + rng() % 64, k = 1 + rng() % 70;
            VectorIndex idx(dim, "test");
            std::vector<std::pair<std::string, std::vector<float>>> entries;
            for (std::size_t i = 0; i < n; ++i) {
                // Duplicate vectors now and then to exercise tie-breaking.
                auto v = (i > 0 && rng() % 5 == 0) ? entries[rng() % i].second : random_unit(rng, dim);
                entries.emplace_back("c" + std::to_string(rng() % 1000) + "_" + std::to_string(i), v);
                idx.add(entries.back().first, v);
            }
            auto q = random_unit(rng, dim);
            auto expect = oracle::cosine_topk(entries, q, k);
            auto got = idx.search(q, k);
            REQUIRE(got.size() == expect.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].chunk_id == expect[i].first);
                CHECK(got[i].score == doctest::Approx(expect[i].second).epsilon(1e-9));
            }
            CHECK(idx.search_serial(q, k) == got);

            auto shuffled = entries;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            VectorIndex other(dim, "test");
            for (const auto& [id, v] : shuffled) other.add(id, v);
            CHECK(other.search(q, k) == got);
        }
    }

    TEST_CASE("index survives a save and load") {
        test::TempDir dir;
        std::mt19937_64 rng(2);
        VectorIndex idx(5, "hash/5");
        for (int i = 0; i < 10; ++i) idx.add("c" + std::to_string(i), random_unit(rng, 5));
        idx.save(dir / "x.index");
        auto back = VectorIndex::load(dir / "x.index");
        CHECK(back.size() == 10);
        CHECK(back.embedder_identity() == "hash/5");
        auto q = random_unit(rng, 5);
        CHECK(back.search(q, 4) == idx.search(q, 4));
        write_file_atomic(dir / "bad.index", "NOTANINDEX");
        CHECK_THROWS_AS(VectorIndex::load(dir / "bad.index"), FormatError);
    }

    TEST_CASE("query equal to an entry ranks it first") {
        auto emb = test::hash_embedder(8);
        emb->set_override("needle", {0, 0, 1, 0, 0, 0, 0, 0});
        emb->set_override("the query", {0, 0, 1, 0, 0, 0, 0, 0});
        EmbeddingClient e(emb);
        auto idx = build_index({text_chunk("a", "hay"), text_chunk("b", "needle"), text_chunk("c", "straw")}, e);
        auto hits = search_topk(idx, e, "the query", 2);
        REQUIRE(hits.size() == 2);
        CHECK(hits[0].chunk_id == "b");
        CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-6));
    }

    TEST_CASE("reciprocal rank fusion") {
        std::vector<Hit> lexical{{"x", 0}, {"y", 0}}, dense{{"z", 0}, {"y", 0}};
        auto fused = rrf_fuse({lexical, dense}, 3);
        REQUIRE(fused.size() == 3);
        CHECK(fused[0].chunk_id == "y");
        CHECK(fused[0].score == doctest::Approx(2.0 / 62).epsilon(1e-12));
        CHECK(fused[1].score == doctest::Approx(1.0 / 61).epsilon(1e-12));
        CHECK(fused[1].chunk_id == "x");
        CHECK(rrf_fuse({lexical, dense}, 1).size() == 1);

        std::vector<Hit> same{{"a", 0}, {"b", 0}, {"c", 0}};
        auto agree = rrf_fuse({same, same}, 3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(agree[i].chunk_id == same[i].chunk_id);
    }

    TEST_CASE("BM25 agrees with the formula (property)") {
        std::mt19937_64 rng(41);
        const std::vector<std::string> vocab{"alpha", "beta", "gamma", "delta", "eps"};
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<Chunk> docs;
            std::vector<std::vector<std::string>> toks;
            std::size_t n = 1 + rng() % 8;
            for (std::size_t i = 0; i < n; ++i) {
                std::string text;
                std::vector<std::string> ws;
                std::size_t len = 1 + rng() % 10;
                for (std::size_t j = 0; j < len; ++j) {
                    ws.push_back(vocab[rng() % vocab.size()]);
                    text += (j ? " " : "") + ws.back();
                }
                toks.push_back(ws);
                docs.push_back(text_chunk("d" + std::to_string(i), text));
            }
            LexicalIndex lex(docs, default_tokenizer());
            std::string query = vocab[rng() % vocab.size()] + " " + vocab[rng() % vocab.size()];
            auto qterms = oracle::words(query);
            std::set<std::string> qset(qterms.begin(), qterms.end());
            double avg = 0;
            for (const auto& t : toks) avg += t.size();
            avg /= n;
            std::map<std::string, double> expect;
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0;
                for (const auto& term : qset) {
                    double tf = std::count(toks[i].begin(), toks[i].end(), term);
                    if (tf == 0) continue;
                    double df = 0;
                    for (const auto& t : toks) df += std::count(t.begin(), t.end(), term) > 0;
                    s += oracle::bm25_term(tf, df, n, toks[i].size(), avg, 1.2, 0.75);
                }
                if (s > 0) expect[docs[i].id] = s;
            }
            auto hits = lexical_search(lex, query, 100);
            REQUIRE(hits.size() == expect.size());
            for (const auto& h : hits) CHECK(h.score == doctest::Approx(expect[h.chunk_id]).epsilon(1e-12));
            for (std::size_t i = 1; i < hits.size(); ++i) CHECK_FALSE(ranks_before(hits[i], hits[i - 1]));
        }
    }

    TEST_CASE("BM25 small cases") {
        LexicalIndex one({text_chunk("a", "solar panels")}, default_tokenizer());
        auto hits = one.search("Solar", 5);
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].chunk_id == "a");
        CHECK(one.search("wind", 5).empty());
        LexicalIndex two({text_chunk("a", "solar solar"), text_chunk("b", "solar wind")}, default_tokenizer());
        auto h = two.search("solar", 5);
        REQUIRE(h.size() == 2);
        CHECK(h[0].chunk_id == "a");
        CHECK(h[0].score > h[1].score);
    }

    TEST_CASE("ensemble search fuses dense and lexical") {
        EmbeddingClient e(test::hash_embedder(16));
        std::vector<Chunk> cs{text_chunk("a", "solar tariffs rise"), text_chunk("b", "wind farms"),
                              text_chunk("c", "solar panel imports")};
        auto idx = build_index(cs, e);
        LexicalIndex lex(cs, default_tokenizer());
        auto hits = ensemble_search(idx, lex, e, "solar tariffs", 2);
        REQUIRE(hits.size() == 2);
        auto dense = search_topk(idx, e, "solar tariffs", kCandidateDepth);
        auto sparse = lex.search("solar tariffs", kCandidateDepth);
        CHECK(hits == rrf_fuse({dense, sparse}, 2));
        LexicalIndex partial({cs[0]}, default_tokenizer());
        CHECK_THROWS_AS(ensemble_search(idx, partial, e, "solar", 2), PreconditionError);
    }

    TEST_CASE("HyDE uses the passage and falls back to the query") {
        test::MockChat m;
        m.backend->set_default("hyde_passage", "A passage about tariffs.");
        CHECK(hyde_rewrite(m.client, "q") == "A passage about tariffs.");
        m.backend->fail_next(1, false);
        CHECK(hyde_rewrite(m.client, "q") == "q");
        m.backend->set_default("hyde_passage", "  ");
        CHECK(hyde_rewrite(m.client, "q") == "q");
    }

    TEST_CASE("reranker registry") {
        RerankerRegistry reg;
        reg.add(std::make_shared<Reverser>());
        REQUIRE(reg.find("reverse"));
        CHECK_FALSE(reg.find("none"));
        auto out = reg.find("reverse")->rerank("q", {{"a", 1}, {"b", 0.5}}, {});
        CHECK(out.front().chunk_id == "b");
    }
}
