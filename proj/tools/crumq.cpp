#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "crumq/core/jsonl.hpp"
#include "crumq/harness/harness.hpp"
#include "crumq/pipeline/pipeline.hpp"
#include "crumq/toy/toy.hpp"

namespace fs = std::filesystem;
using namespace crumq;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string fixtures;
    std::string out_dir;
    bool force = false;
    bool verbose = false;
    bool quiet = false;
};

struct FileFlags {
    std::string corpus, topics, articles, chunks, contexts, qa, corpus_index, records, out;
    std::optional<std::size_t> nc;
    std::optional<int> max_pairs;
    bool keep_single_hop = false;
};

Config load(const Globals& g, const FileFlags& f) {
    Config c = g.config.empty() ? parse_config("", fs::current_path()) : load_config(g.config);
    if (g.seed) c.seed = *g.seed;
    if (g.workers) {
        if (*g.workers < 1) throw ConfigError("invalid configuration:\n  workers: must be >= 1");
        c.workers = *g.workers;
    }
    if (!g.fixtures.empty()) c.paths.fixtures = fs::absolute(g.fixtures);
    if (!g.out_dir.empty()) c.paths.out = fs::absolute(g.out_dir);
    if (!f.corpus.empty()) c.paths.corpus = fs::absolute(f.corpus);
    if (f.nc) {
        if (*f.nc < 1) throw ConfigError("invalid configuration:\n  genqa.nc: must be >= 1");
        c.genqa.nc = *f.nc;
    }
    if (f.max_pairs) {
        if (*f.max_pairs < 1) throw ConfigError("invalid configuration:\n  genqa.max_pairs: must be >= 1");
        c.genqa.max_pairs = *f.max_pairs;
    }
    if (f.keep_single_hop) c.vetting.keep_single_hop = true;
    return c;
}

void set_if(fs::path& target, const std::string& value) {
    if (!value.empty()) target = fs::absolute(value);
}

Artifacts artifacts_for(Stage s, const Config& c, const FileFlags& f) {
    auto a = Artifacts::under(c.paths.out);
    set_if(a.topics, f.topics);
    set_if(a.articles, f.articles);
    set_if(a.chunks, f.chunks);
    set_if(a.contexts, f.contexts);
    set_if(a.corpus_index, f.corpus_index);
    switch (s) {
        case Stage::topics: set_if(a.topics, f.out); break;
        case Stage::crawl: set_if(a.articles, f.out); break;
        case Stage::chunk: set_if(a.chunks, f.out); break;
        case Stage::generate: set_if(a.qa_seed, f.out); break;
        case Stage::verify:
            set_if(a.qa_seed, f.qa);
            set_if(a.qa_verified, f.out);
            break;
        case Stage::filter:
            set_if(a.qa_verified, f.qa);
            set_if(a.qa_accepted, f.out);
            break;
        case Stage::evaluate:
            set_if(a.qa_accepted, f.qa);
            set_if(a.eval_records, f.out);
            break;
        case Stage::probe:
            set_if(a.qa_accepted, f.qa);
            set_if(a.probes, f.out);
            break;
        case Stage::cheatability:
            set_if(a.qa_accepted, f.qa);
            set_if(a.cheatability, f.out);
            break;
        case Stage::report: set_if(a.eval_records, f.records); break;
    }
    return a;
}

void run_stage(Stage s, const Globals& g, const FileFlags& f) {
    auto cfg = load(g, f);
    auto art = artifacts_for(s, cfg, f);
    Pipeline p(std::move(cfg), art);
    p.run_stage(s, g.force);
    p.write_manifest();
}

void print_report(const Globals& g, const FileFlags& f, const std::string& format) {
    std::vector<harness::MetricsReport> reports;
    if (!f.records.empty()) {
        std::map<std::string, std::vector<EvalRecord>> by_config;
        for (auto& r : load_records<EvalRecord>(f.records)) by_config[r.config_id].push_back(std::move(r));
        std::map<std::string, int> hops;
        if (!f.qa.empty())
            for (const auto& q : load_records<CrumQA>(f.qa)) hops[q.id] = q.hop_count.value_or(0);
        for (const auto& [_, rs] : by_config) reports.push_back(harness::compute_unanswerability_metrics(rs, hops));
        std::cout << (format == "csv" ? harness::format_metrics_csv(reports) : harness::format_metrics_table(reports));
        return;
    }
    auto cfg = load(g, f);
    auto art = artifacts_for(Stage::report, cfg, f);
    Pipeline p(std::move(cfg), art);
    p.run_stage(Stage::report, g.force);
    p.write_manifest();
    std::cout << read_file(art.reports / (format == "csv" ? "metrics.csv" : "metrics.txt"));
    auto cheat = art.reports / (format == "csv" ? "cheatability.csv" : "cheatability.txt");
    if (fs::exists(cheat)) std::cout << "\n" << read_file(cheat);
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("crumq"));
    spdlog::set_pattern("%^%l%$: %v");

    CLI::App app{"Generate and evaluate unanswerable multi-hop queries"};
    app.require_subcommand(1);
    Globals g;
    FileFlags f;
    app.add_option("--config", g.config, "Pipeline configuration (TOML)")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Override the configured seed");
    app.add_option("--workers", g.workers, "Worker threads per stage");
    app.add_option("--fixtures", g.fixtures, "Replay feed responses from this directory");
    app.add_option("--artifacts", g.out_dir, "Artifact directory (overrides paths.out)");
    app.add_flag("--force", g.force, "Re-run stages even when up to date");
    app.add_flag("-v,--verbose", g.verbose, "Debug logging");
    app.add_flag("-q,--quiet", g.quiet, "Warnings and errors only");

    std::map<CLI::App*, Stage> stage_cmds;
    auto stage_cmd = [&](Stage s, const std::string& help) {
        auto* cmd = app.add_subcommand(std::string(to_string(s)), help);
        cmd->add_option("--out", f.out, "Primary output file");
        stage_cmds[cmd] = s;
        return cmd;
    };
    auto* topics = stage_cmd(Stage::topics, "Extract, ground and deduplicate topics");
    topics->add_option("--corpus", f.corpus, "Corpus directory");
    auto* crawl = stage_cmd(Stage::crawl, "Fetch external articles for each topic");
    crawl->add_option("--topics", f.topics, "Topics file");
    auto* chunk = stage_cmd(Stage::chunk, "Chunk documents, filter relevance, index the corpus");
    chunk->add_option("--corpus", f.corpus, "Corpus directory");
    chunk->add_option("--topics", f.topics, "Topics file");
    chunk->add_option("--articles", f.articles, "External articles file");
    auto* generate = stage_cmd(Stage::generate, "Enumerate contexts and generate seed QA pairs");
    generate->add_option("--chunks", f.chunks, "Relevance-filtered chunks");
    generate->add_option("--nc", f.nc, "Contexts per (size, external count) bucket");
    generate->add_option("--max-pairs", f.max_pairs, "QA pairs kept per context");
    auto* verify = stage_cmd(Stage::verify, "Check that seed questions are unanswerable from the corpus");
    verify->add_option("--qa", f.qa, "Seed QA pairs");
    verify->add_option("--corpus-index", f.corpus_index, "Corpus vector index");
    auto* filter = stage_cmd(Stage::filter, "Hop adherence and quality gates");
    filter->add_option("--qa", f.qa, "Verified QA pairs");
    filter->add_flag("--keep-single-hop", f.keep_single_hop, "Accept single-hop pairs");

    auto* evaluate = app.add_subcommand("evaluate", "Run RAG configurations or cheatability scoring");
    std::string mode = "unanswerability";
    evaluate->add_option("--mode", mode, "unanswerability | cheatability")
        ->check(CLI::IsMember({"unanswerability", "cheatability"}));
    evaluate->add_option("--qa", f.qa, "Accepted QA pairs");
    evaluate->add_option("--out", f.out, "Output file");

    auto* probe = stage_cmd(Stage::probe, "Build context-partitioned probe instances");
    probe->add_option("--qa", f.qa, "Accepted QA pairs");

    auto* report = app.add_subcommand("report", "Print metric tables");
    std::string format = "table";
    report->add_option("--records", f.records, "Evaluation records; printed without running the stage")
        ->check(CLI::ExistingFile);
    report->add_option("--qa", f.qa, "QA pairs for the per-hop breakdown");
    report->add_option("--format", format, "table | csv")->check(CLI::IsMember({"table", "csv"}));

    auto* run = app.add_subcommand("run", "Run every stage in order, resuming where possible");

    auto* toy = app.add_subcommand("toy", "Write the bundled toy corpus and mock fixtures");
    std::string toy_out;
    std::uint64_t toy_seed = 0;
    toy->add_option("--out", toy_out, "Output directory")->required();
    toy->add_option("--seed", toy_seed, "Generation seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    spdlog::set_level(g.verbose ? spdlog::level::debug : g.quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        for (auto& [cmd, s] : stage_cmds)
            if (cmd->parsed()) run_stage(s, g, f);
        if (evaluate->parsed()) run_stage(mode == "cheatability" ? Stage::cheatability : Stage::evaluate, g, f);
        if (report->parsed()) print_report(g, f, format);
        if (run->parsed()) {
            Pipeline p(load(g, f));
            for (auto s : all_stages()) p.run_stage(s, g.force);
            p.write_manifest();
            std::cout << read_file(p.artifacts().manifest);
        }
        if (toy->parsed()) toy::generate_toy_corpus(toy_out, toy_seed);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const StageError& e) {
        spdlog::error("stage {} failed: {}", to_string(e.stage()), e.what());
        return exit_code_for(e.stage());
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
