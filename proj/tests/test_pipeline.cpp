#include <doctest.h>

#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"
#include "crumq/core/jsonl.hpp"
#include "crumq/pipeline/pipeline.hpp"
#include "crumq/toy/toy.hpp"
#include "support.hpp"
#include "toy_check.hpp"

using namespace crumq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json manifest_of(const fs::path& out) { return json::parse(read_file(out / "manifest.json")); }

}  // namespace

TEST_SUITE("pipeline") {
    TEST_CASE("empty configuration takes the defaults") {
        auto c = parse_config("", "/base");
        CHECK(c.seed == 0);
        CHECK(c.workers == 1);
        CHECK(c.topics.threshold == 0.95);
        CHECK(c.genqa.chunk_tokens == 1024);
        CHECK(c.genqa.nc == 50);
        CHECK(c.genqa.max_pairs == 10);
        CHECK(c.vetting.verify_k == 10);
        CHECK(c.retrieval.rrf_constant == 60.0);
        CHECK(c.harness.alpha == 0.05);
        CHECK(c.models.count(c.roles.generator) == 1);
        CHECK(c.embedders.count(c.roles.embedder) == 1);
        CHECK(c.cache_dir() == c.paths.out / "cache");
        auto j = config_to_json(c);
        CHECK(j["topics"]["threshold"] == 0.95);
    }

    TEST_CASE("configuration errors are collected with key paths") {
        try {
            parse_config("workers = 0\n[topics]\nthreshold = 2.0\nthresh = 1\n[genqa]\nnc = 0\n");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            std::string msg = e.what();
            CHECK(msg.find("workers") != std::string::npos);
            CHECK(msg.find("topics.threshold") != std::string::npos);
            CHECK(msg.find("topics.thresh: unknown key") != std::string::npos);
            CHECK(msg.find("genqa.nc") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_config("seed = "), ConfigError);
        CHECK_THROWS_AS(parse_config("[roles]\ngenerator = \"nobody\"\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("[[rag]]\nid = \"a\"\ngenerator_model = \"mock\"\nembedding = \"hash\"\n"
                                     "retrieval = \"psychic\"\n"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config("[acquire]\npublished_after = \"yesterday\"\n"), ConfigError);
    }

    TEST_CASE("relative paths resolve against the config directory") {
        auto c = parse_config("[paths]\ncorpus = \"corpus\"\nout = \"/abs/out\"\n", "/base");
        CHECK(c.paths.corpus == fs::path("/base/corpus"));
        CHECK(c.paths.out == fs::path("/abs/out"));
    }

    TEST_CASE("stage order and exit codes") {
        const auto& st = all_stages();
        REQUIRE(st.size() == 10);
        for (std::size_t i = 0; i < st.size(); ++i) {
            CHECK(exit_code_for(st[i]) == static_cast<int>(3 + i));
            CHECK(parse_stage(to_string(st[i])) == st[i]);
        }
        CHECK(exit_code_for(Stage::topics) == 3);
        CHECK_THROWS(parse_stage("nope"));
    }

    TEST_CASE("corpus loading checks gold keys") {
        test::TempDir d;
        write_file_atomic(d / "documents.jsonl", R"({"key":"k1","title":"T","body":"b"})" "\n");
        write_file_atomic(d / "requests.jsonl", R"({"id":"r1","text":"q","gold_doc_keys":["k1"]})" "\n");
        auto corpus = load_corpus(d.path());
        REQUIRE(corpus.documents.size() == 1);
        REQUIRE(corpus.requests.size() == 1);
        CHECK(corpus.requests[0].gold_doc_ids == std::vector<std::string>{corpus.documents[0].id});

        write_file_atomic(d / "requests.jsonl", R"({"id":"r1","text":"q","gold_doc_keys":["k9"]})" "\n");
        CHECK_THROWS_AS(load_corpus(d.path()), FormatError);
        write_file_atomic(d / "requests.jsonl", R"({"id":"r1","text":"q","gold_doc_keys":[]})" "\n");
        CHECK_THROWS_AS(load_corpus(d.path()), FormatError);
    }

    TEST_CASE("toy run follows the script and is reproducible") {
        test::TempDir d;
        toy::generate_toy_corpus(d / "a", 3);
        toy::generate_toy_corpus(d / "b", 3);
        CHECK(test::tree_diff(d / "a", d / "b") == "");
        for (const char* name : {"a", "b"}) {
            Pipeline p(load_config(d / name / "pipeline.toml"));
            p.run_all();
        }
        auto out = d / "a" / "out";
        CHECK(test::tree_diff(out, d / "b" / "out") == "");

        auto gates = test::check_toy_gates(out);
        CHECK(gates.pairs > 0);
        CHECK(gates.mismatches == 0);
        CHECK(gates.accepted_file_matches);
        CHECK(gates.accepted > 0);
        for (const char* reason : {"verify_fail", "hop_mismatch", "quality_fail"}) CHECK(gates.rejected[reason] > 0);

        auto funnel = manifest_of(out)["vetting_funnel"];
        CHECK(funnel["seed"] >= funnel["verified_unanswerable"]);
        CHECK(funnel["verified_unanswerable"] >= funnel["hop_checked"]);
        CHECK(funnel["hop_checked"] >= funnel["accepted"]);
        CHECK(funnel["accepted"] == gates.accepted);

        // Chunks of every toy document rebuild its tokenized body.
        auto corpus = load_corpus(d / "a" / "corpus");
        std::map<std::string, std::vector<Chunk>> by_doc;
        for (auto& c : load_records<Chunk>(out / "corpus_chunks.jsonl")) by_doc[c.doc_id].push_back(c);
        for (auto& [_, cs] : by_doc)
            std::sort(cs.begin(), cs.end(), [](const Chunk& x, const Chunk& y) { return x.index_in_doc < y.index_in_doc; });
        for (const auto& doc : corpus.documents) {
            auto expect = default_tokenizer().tokens(doc.body);
            std::vector<std::string> got;
            for (const auto& c : by_doc[doc.id]) {
                auto t = default_tokenizer().tokens(c.text);
                got.insert(got.end(), t.begin(), t.end());
            }
            CHECK(got == expect);
        }
    }

    TEST_CASE("a resumed run skips every stage") {
        test::TempDir d;
        toy::generate_toy_corpus(d.path(), 5);
        auto cfg = load_config(d / "pipeline.toml");
        {
            Pipeline p(cfg);
            p.run_all();
            CHECK(p.provider_calls() > 0);
        }
        Pipeline again(cfg);
        again.run_all();
        CHECK(again.provider_calls() == 0);
        for (auto s : all_stages()) CHECK(again.stage_summary(s)["status"] == "skipped");

        // A changed setting re-runs the stages that depend on it.
        auto changed = cfg;
        changed.vetting.keep_single_hop = true;
        Pipeline third(changed);
        third.run_all();
        CHECK(third.stage_summary(Stage::verify)["status"] == "skipped");
        CHECK(third.stage_summary(Stage::filter)["status"] == "ran");
    }

    TEST_CASE("command line runs, resumes and reports failures") {
        test::TempDir d;
        REQUIRE(test::run_cli("toy --out toy --seed 2", d.path()) == 0);
        auto dir = d / "toy";
        CHECK(test::run_cli("--config pipeline.toml run", dir) == 0);
        auto first = manifest_of(dir / "out");
        CHECK(first["provider_calls"]["total"] > 0);
        CHECK(test::run_cli("--config pipeline.toml run", dir) == 0);
        auto second = manifest_of(dir / "out");
        CHECK(second["provider_calls"]["total"] == 0);
        CHECK(second["stages"]["report"]["status"] == "skipped");

        CHECK(test::run_cli("--config pipeline.toml --no-such-flag run", dir) == 2);
        write_file_atomic(dir / "bad.toml", "[topics]\nthreshold = 7\n");
        CHECK(test::run_cli("--config bad.toml run", dir) == 2);
        CHECK(test::run_cli("--config pipeline.toml --artifacts other verify --qa missing.jsonl", dir) ==
              exit_code_for(Stage::verify));

        // Fresh contexts fall outside the recorded table, so drive them from the rules.
        auto text = read_file(dir / "pipeline.toml");
        text.replace(text.find("mock_chat.json"), 14, "mock_rules.json");
        write_file_atomic(dir / "rules.toml", text);
        fs::copy(dir / "out", dir / "scoped", fs::copy_options::recursive);
        CHECK(test::run_cli("--config rules.toml --artifacts scoped generate --nc 1", dir) == 0);
        std::map<std::string, std::string> topic_of;
        for (const auto& c : load_records<Chunk>(dir / "scoped" / "chunks.jsonl")) topic_of[c.id] = c.topic_id;
        std::map<std::tuple<std::string, std::size_t, int>, int> buckets;
        for (const auto& c : load_records<ContextGroup>(dir / "scoped" / "contexts.jsonl"))
            ++buckets[{topic_of.at(c.chunk_ids.front()), c.chunk_ids.size(), c.n_external}];
        CHECK_FALSE(buckets.empty());
        for (const auto& [_, n] : buckets) CHECK(n == 1);
    }
}
