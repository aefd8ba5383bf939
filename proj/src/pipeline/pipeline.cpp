#include "crumq/pipeline/pipeline.hpp"

#include <algorithm>
#include <mutex>
#include <set>

#include <spdlog/spdlog.h>

#include "crumq/acquire/feeds.hpp"
#include "crumq/acquire/source.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/core/jsonl.hpp"
#include "crumq/core/parallel.hpp"
#include "crumq/genqa/genqa.hpp"
#include "crumq/harness/harness.hpp"
#include "crumq/providers/http.hpp"
#include "crumq/providers/mock.hpp"
#include "crumq/retrieval/retrieval.hpp"
#include "crumq/text/tokenizer.hpp"
#include "crumq/topics/topics.hpp"
#include "crumq/vetting/vetting.hpp"

namespace crumq {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Corpus

Corpus load_corpus(const fs::path& dir) {
    Corpus c;
    std::map<std::string, std::string> key_to_id;
    auto each_line = [](const fs::path& path, auto&& fn) {
        auto text = read_file(path);
        std::size_t pos = 0;
        int line_no = 0;
        while (pos < text.size()) {
            auto nl = text.find('\n', pos);
            if (nl == std::string::npos) nl = text.size();
            auto line = text.substr(pos, nl - pos);
            pos = nl + 1;
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto where = path.string() + ":" + std::to_string(line_no);
            try {
                fn(json::parse(line), where);
            } catch (const json::exception& e) {
                throw FormatError(where + ": " + e.what());
            }
        }
    };
    each_line(dir / "documents.jsonl", [&](const json& j, const std::string& where) {
        auto key = j.at("key").get<std::string>();
        std::optional<std::string> published;
        if (auto it = j.find("published_at"); it != j.end() && !it->is_null()) published = it->get<std::string>();
        auto doc = DocumentRef::make(Origin::corpus, key, j.value("title", ""), std::nullopt, published,
                                     j.at("body").get<std::string>());
        if (!key_to_id.emplace(key, doc.id).second) throw FormatError(where + ": duplicate document key " + key);
        c.documents.push_back(std::move(doc));
    });
    each_line(dir / "requests.jsonl", [&](const json& j, const std::string& where) {
        Request r;
        auto key = j.at("id").get<std::string>();
        r.text = j.at("text").get<std::string>();
        r.id = assign_id(RecordKind::request, canonical_fields(key, r.text));
        for (const auto& k : j.at("gold_doc_keys")) {
            auto it = key_to_id.find(k.get<std::string>());
            if (it == key_to_id.end())
                throw FormatError(where + ": unknown gold document key " + k.get<std::string>());
            r.gold_doc_ids.push_back(it->second);
        }
        if (r.gold_doc_ids.empty()) throw FormatError(where + ": request " + key + " has no gold documents");
        c.requests.push_back(std::move(r));
    });
    std::sort(c.documents.begin(), c.documents.end(),
              [](const DocumentRef& a, const DocumentRef& b) { return a.id < b.id; });
    std::sort(c.requests.begin(), c.requests.end(), [](const Request& a, const Request& b) { return a.id < b.id; });
    return c;
}

// ---------------------------------------------------------------------------
// Stages

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> kAll{Stage::topics,   Stage::crawl,    Stage::chunk,
                                         Stage::generate, Stage::verify,   Stage::filter,
                                         Stage::evaluate, Stage::probe,    Stage::cheatability,
                                         Stage::report};
    return kAll;
}

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::topics: return "topics";
        case Stage::crawl: return "crawl";
        case Stage::chunk: return "chunk";
        case Stage::generate: return "generate";
        case Stage::verify: return "verify";
        case Stage::filter: return "filter";
        case Stage::evaluate: return "evaluate";
        case Stage::probe: return "probe";
        case Stage::cheatability: return "cheatability";
        case Stage::report: return "report";
    }
    return "?";
}

Stage parse_stage(std::string_view s) {
    for (auto st : all_stages())
        if (to_string(st) == s) return st;
    throw ConfigError("unknown stage '" + std::string(s) + "'");
}

int exit_code_for(Stage s) { return 3 + static_cast<int>(s); }

Artifacts Artifacts::under(const fs::path& root) {
    Artifacts a;
    a.root = root;
    a.topics = root / "topics.jsonl";
    a.articles = root / "articles.jsonl";
    a.crawl_warnings = root / "crawl_warnings.jsonl";
    a.chunks = root / "chunks.jsonl";
    a.corpus_chunks = root / "corpus_chunks.jsonl";
    a.corpus_index = root / "corpus_chunks.index";
    a.contexts = root / "contexts.jsonl";
    a.qa_seed = root / "qa_seed.jsonl";
    a.verifications = root / "verifications.jsonl";
    a.qa_verified = root / "qa_verified.jsonl";
    a.qa_all = root / "qa_all.jsonl";
    a.qa_accepted = root / "qa_accepted.jsonl";
    a.review_sample = root / "review_sample.jsonl";
    a.eval_records = root / "eval_records.jsonl";
    a.probes = root / "probes.jsonl";
    a.reports = root / "reports";
    a.cheatability = a.reports / "cheatability.jsonl";
    a.quarantine = root / "quarantine";
    a.stages = root / ".stages";
    a.manifest = root / "manifest.json";
    return a;
}

namespace {

std::string file_digest(const fs::path& p) {
    if (!fs::exists(p)) return "absent";
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(p))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::string acc;
        for (const auto& f : files) acc += fs::relative(f, p).generic_string() + "=" + sha256_hex(read_file(f)) + ";";
        return sha256_hex(acc);
    }
    return sha256_hex(read_file(p));
}

void write_json_lines(const fs::path& path, std::vector<json> rows) {
    std::vector<std::string> lines;
    for (const auto& r : rows) lines.push_back(r.dump());
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    write_file_atomic(path, out);
}

json ratios_json(const harness::Ratios& r) {
    return {{"n", r.n},
            {"refusals", r.refusals},
            {"clarifications", r.clarifications},
            {"correct", r.correct},
            {"acceptable", r.acceptable},
            {"unanswered", r.unanswered},
            {"clarification", r.clarification},
            {"accuracy", r.accuracy}};
}

json metrics_json(const harness::MetricsReport& m) {
    json hops = json::object();
    for (const auto& [h, r] : m.by_hop) hops[h == 0 ? "unknown" : std::to_string(h)] = ratios_json(r);
    return {{"config_id", m.config_id},
            {"overall", ratios_json(m.overall)},
            {"by_hop", hops},
            {"errored", m.errored},
            {"error_rate", m.error_rate}};
}

bool reached(const CrumQA& qa, QaStage s) {
    auto name = std::string(to_string(s));
    return std::find(qa.status_history.begin(), qa.status_history.end(), name) != qa.status_history.end();
}

}  // namespace

struct Pipeline::Impl {
    std::shared_ptr<PromptRegistry> prompts;
    std::shared_ptr<CallCache> cache;
    std::mutex mu;
    std::map<std::string, std::shared_ptr<ChatClient>> chats;
    std::map<std::string, std::shared_ptr<EmbeddingClient>> embeds;
    std::map<std::string, std::shared_ptr<MockChatBackend>> mocks;
    std::map<Stage, json> summaries;
    retrieval::RerankerRegistry rerankers;
};

Pipeline::Pipeline(Config config, std::optional<Artifacts> artifacts)
    : cfg_(std::move(config)), art_(artifacts ? *artifacts : Artifacts::under(cfg_.paths.out)),
      impl_(std::make_unique<Impl>()) {
    auto prompts = std::make_shared<PromptRegistry>(PromptRegistry::defaults());
    if (!cfg_.paths.prompts.empty()) prompts->load_directory(cfg_.paths.prompts);
    impl_->prompts = prompts;
}

Pipeline::~Pipeline() = default;

ChatClient& Pipeline::chat(const std::string& model) {
    std::lock_guard lock(impl_->mu);
    if (auto it = impl_->chats.find(model); it != impl_->chats.end()) return *it->second;
    auto spec_it = cfg_.models.find(model);
    if (spec_it == cfg_.models.end()) throw ConfigError("unknown model '" + model + "'");
    const auto& spec = spec_it->second;
    if (!impl_->cache) impl_->cache = std::make_shared<CallCache>(cfg_.cache_dir());
    std::shared_ptr<ChatBackend> backend;
    if (spec.kind == "mock") {
        auto mock = spec.fixtures.empty() ? std::make_shared<MockChatBackend>(model)
                                          : MockChatBackend::from_file(spec.fixtures, model);
        impl_->mocks[model] = mock;
        backend = mock;
    } else {
        backend = std::make_shared<OpenAICompatibleChat>(spec.provider, spec.model,
                                                         credentials_from_env(spec.provider, spec.base_url));
    }
    RetryPolicy retry{cfg_.providers.max_attempts, std::chrono::milliseconds(cfg_.providers.backoff_ms), 2.0};
    auto client = std::make_shared<ChatClient>(backend, impl_->prompts, impl_->cache, retry,
                                               cfg_.providers.max_in_flight);
    impl_->chats[model] = client;
    return *client;
}

EmbeddingClient& Pipeline::embedder(const std::string& name) {
    std::lock_guard lock(impl_->mu);
    if (auto it = impl_->embeds.find(name); it != impl_->embeds.end()) return *it->second;
    auto spec_it = cfg_.embedders.find(name);
    if (spec_it == cfg_.embedders.end()) throw ConfigError("unknown embedder '" + name + "'");
    const auto& spec = spec_it->second;
    if (!impl_->cache) impl_->cache = std::make_shared<CallCache>(cfg_.cache_dir());
    std::shared_ptr<Embedder> backend;
    if (spec.kind == "hash_projection") {
        backend = std::make_shared<HashProjectionEmbedder>(spec.dimension, spec.seed);
    } else {
        backend = std::make_shared<OpenAICompatibleEmbedder>(spec.provider, spec.model,
                                                             credentials_from_env(spec.provider, spec.base_url));
    }
    auto client = std::make_shared<EmbeddingClient>(backend, impl_->cache);
    impl_->embeds[name] = client;
    return *client;
}

std::shared_ptr<MockChatBackend> Pipeline::mock_backend(const std::string& model) {
    chat(model);
    std::lock_guard lock(impl_->mu);
    auto it = impl_->mocks.find(model);
    return it == impl_->mocks.end() ? nullptr : it->second;
}

retrieval::RerankerRegistry& Pipeline::rerankers() { return impl_->rerankers; }

long Pipeline::provider_calls() const {
    std::lock_guard lock(impl_->mu);
    long n = 0;
    for (const auto& [_, c] : impl_->chats) n += c->backend_calls();
    for (const auto& [_, e] : impl_->embeds) n += e->backend_calls();
    return n;
}

json Pipeline::stage_summary(Stage s) const {
    std::lock_guard lock(impl_->mu);
    auto it = impl_->summaries.find(s);
    return it == impl_->summaries.end() ? json(nullptr) : it->second;
}

std::vector<fs::path> Pipeline::outputs_of(Stage s) const {
    const auto q = art_.quarantine / (std::string(to_string(s)) + ".jsonl");
    switch (s) {
        case Stage::topics: return {art_.topics, q};
        case Stage::crawl: return {art_.articles, art_.crawl_warnings};
        case Stage::chunk: return {art_.chunks, art_.corpus_chunks, art_.corpus_index, q};
        case Stage::generate: return {art_.contexts, art_.qa_seed};
        case Stage::verify: return {art_.verifications, art_.qa_verified, q};
        case Stage::filter: return {art_.qa_all, art_.qa_accepted, q};
        case Stage::evaluate: return {art_.eval_records, q};
        case Stage::probe: return {art_.probes};
        case Stage::cheatability: return {art_.cheatability, q};
        case Stage::report: return {art_.reports / "metrics.jsonl", art_.reports / "metrics.csv"};
    }
    return {};
}

std::string Pipeline::stage_digest(Stage s) {
    auto model_fp = [&](const std::string& name) {
        const auto& m = cfg_.models.at(name);
        return json{{"name", name}, {"kind", m.kind}, {"provider", m.provider}, {"model", m.model},
                    {"fixtures", m.kind == "mock" ? file_digest(m.fixtures) : ""}};
    };
    auto embed_fp = [&](const std::string& name) {
        const auto& e = cfg_.embedders.at(name);
        return json{{"name", name}, {"kind", e.kind}, {"dimension", e.dimension}, {"seed", e.seed},
                    {"provider", e.provider}, {"model", e.model}};
    };
    auto files = [&](std::initializer_list<fs::path> ps) {
        json j = json::array();
        for (const auto& p : ps) j.push_back(file_digest(p));
        return j;
    };
    const auto full = config_to_json(cfg_);
    json d{{"stage", to_string(s)}, {"prompts", impl_->prompts->digest()}, {"tokenizer", default_tokenizer().name()}};
    switch (s) {
        case Stage::topics:
            d["inputs"] = files({cfg_.paths.corpus / "documents.jsonl", cfg_.paths.corpus / "requests.jsonl"});
            d["config"] = {full["topics"], model_fp(cfg_.roles.generator), embed_fp(cfg_.roles.embedder)};
            break;
        case Stage::crawl:
            d["inputs"] = files({art_.topics, cfg_.paths.fixtures});
            d["config"] = {full["acquire"], cfg_.paths.fixtures.empty() ? "live" : "fixtures"};
            break;
        case Stage::chunk:
            d["inputs"] = files({art_.topics, art_.articles, cfg_.paths.corpus / "documents.jsonl",
                                 cfg_.paths.corpus / "requests.jsonl"});
            d["config"] = {full["genqa"]["chunk_tokens"], model_fp(cfg_.roles.judge), embed_fp(cfg_.roles.embedder)};
            break;
        case Stage::generate:
            d["inputs"] = files({art_.chunks});
            d["config"] = {full["genqa"]["nc"], full["genqa"]["max_pairs"], cfg_.seed, model_fp(cfg_.roles.generator)};
            break;
        case Stage::verify:
            d["inputs"] = files({art_.qa_seed, art_.corpus_chunks, art_.corpus_index});
            d["config"] = {full["vetting"]["verify_k"], model_fp(cfg_.roles.judge), embed_fp(cfg_.roles.embedder)};
            break;
        case Stage::filter:
            d["inputs"] = files({art_.qa_verified, art_.verifications, art_.contexts, art_.chunks, art_.corpus_chunks});
            d["config"] = {full["vetting"], cfg_.seed, model_fp(cfg_.roles.judge)};
            break;
        case Stage::evaluate: {
            d["inputs"] = files({art_.qa_accepted, art_.corpus_chunks, art_.corpus_index});
            json models = json::array();
            for (const auto& r : cfg_.rag) models.push_back({model_fp(r.generator_model), embed_fp(r.embedding)});
            d["config"] = {full["rag"], full["retrieval"], full["harness"]["sample"], cfg_.seed,
                           model_fp(cfg_.roles.judge), models};
            break;
        }
        case Stage::probe:
            d["inputs"] = files({art_.qa_accepted, art_.contexts});
            d["config"] = {cfg_.seed};
            break;
        case Stage::cheatability: {
            d["inputs"] = files({art_.probes, art_.qa_accepted, art_.contexts, art_.chunks});
            json models = json::array();
            for (const auto& m : cfg_.harness.cheat_models) models.push_back(model_fp(m));
            d["config"] = {full["harness"]["probe_credit"], models};
            break;
        }
        case Stage::report:
            d["inputs"] = files({art_.eval_records, art_.qa_accepted, art_.cheatability});
            d["config"] = {full["harness"], cfg_.seed};
            break;
    }
    return sha256_hex(d.dump());
}

void Pipeline::run_stage(Stage s, bool force) {
    const auto name = std::string(to_string(s));
    const auto state_path = art_.stages / (name + ".json");
    try {
        auto digest = stage_digest(s);
        if (!force && fs::exists(state_path)) {
            auto state = json::parse(read_file(state_path));
            const auto outputs = outputs_of(s);
            bool outputs_ok = std::all_of(outputs.begin(), outputs.end(),
                                          [](const fs::path& p) { return fs::exists(p); });
            if (outputs_ok && state.value("digest", "") == digest) {
                spdlog::info("{}: up to date, skipped", name);
                std::lock_guard lock(impl_->mu);
                impl_->summaries[s] = {{"status", "skipped"}, {"counts", state.at("counts")}};
                return;
            }
        }
        spdlog::info("{}: running", name);
        fs::create_directories(art_.stages);
        // A failed run must not leave a stale checkpoint behind.
        fs::remove(state_path);
        auto counts = execute(s);
        write_file_atomic(state_path, json{{"digest", digest}, {"counts", counts}}.dump(2) + "\n");
        std::lock_guard lock(impl_->mu);
        impl_->summaries[s] = {{"status", "ran"}, {"counts", counts}};
    } catch (const StageError&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(s, e.what());
    }
}

void Pipeline::run_all() {
    for (auto s : all_stages()) run_stage(s);
    write_manifest();
}

void Pipeline::write_manifest() {
    json cfg = config_to_json(cfg_);
    cfg.erase("paths");
    // Fixture tables count by content so relocating a run keeps the digest.
    for (auto& [name, m] : cfg["models"].items())
        if (m.contains("fixtures")) m["fixtures"] = file_digest(cfg_.models.at(name).fixtures);
    json stages = json::object();
    for (auto s : all_stages())
        if (auto sum = stage_summary(s); !sum.is_null()) stages[std::string(to_string(s))] = sum;
    json models = json::object(), embedders = json::object();
    for (const auto& [name, _] : cfg_.models) models[name] = chat(name).identity();
    for (const auto& [name, _] : cfg_.embedders) embedders[name] = embedder(name).identity();

    json funnel = nullptr;
    if (fs::exists(art_.qa_all) && fs::exists(art_.qa_seed)) {
        auto all = load_records<CrumQA>(art_.qa_all);
        std::size_t verified = 0, hop = 0, accepted = 0;
        for (const auto& q : all) {
            verified += reached(q, QaStage::verified_unanswerable);
            hop += reached(q, QaStage::hop_checked);
            accepted += reached(q, QaStage::accepted);
        }
        funnel = {{"seed", load_records<CrumQA>(art_.qa_seed).size()},
                  {"verified_unanswerable", verified},
                  {"hop_checked", hop},
                  {"accepted", accepted}};
    }
    json chat_calls = json::object(), embed_calls = json::object();
    {
        std::lock_guard lock(impl_->mu);
        for (const auto& [n, c] : impl_->chats)
            chat_calls[n] = {{"backend_calls", c->backend_calls()}, {"cache_hits", c->cache_hits()}};
        for (const auto& [n, e] : impl_->embeds) embed_calls[n] = {{"backend_calls", e->backend_calls()}};
    }
    json m{{"config_digest", sha256_hex(cfg.dump())},
           {"seed", cfg_.seed},
           {"providers", {{"models", models}, {"embedders", embedders}}},
           {"stages", stages},
           {"vetting_funnel", funnel},
           {"provider_calls", {{"chat", chat_calls}, {"embedding", embed_calls}, {"total", provider_calls()}}}};
    write_file_atomic(art_.manifest, m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Stage bodies

json Pipeline::execute(Stage s) {
    const auto name = std::string(to_string(s));
    Quarantine quarantine;
    const int workers = cfg_.workers;
    auto save_quarantine = [&] {
        persist_records(art_.quarantine / (name + ".jsonl"), quarantine.entries());
    };

    switch (s) {
        case Stage::topics: {
            auto corpus = load_corpus(cfg_.paths.corpus);
            std::map<std::string, const DocumentRef*> docs;
            for (const auto& d : corpus.documents) docs[d.id] = &d;
            auto& gen = chat(cfg_.roles.generator);
            std::vector<std::vector<Topic>> initial(corpus.requests.size()), grounded(corpus.requests.size());
            parallel_for(corpus.requests.size(), workers, [&](std::size_t i) {
                const auto& req = corpus.requests[i];
                initial[i] = topics::extract_request_keyphrases(gen, req);
                for (const auto& t : initial[i])
                    for (const auto& gid : req.gold_doc_ids)
                        for (auto& g : topics::ground_topics(gen, t, *docs.at(gid), req))
                            grounded[i].push_back(std::move(g));
            });
            std::vector<Topic> all;
            std::size_t n_initial = 0, n_grounded = 0;
            for (std::size_t i = 0; i < initial.size(); ++i) {
                n_initial += initial[i].size();
                n_grounded += grounded[i].size();
                all.insert(all.end(), initial[i].begin(), initial[i].end());
                all.insert(all.end(), grounded[i].begin(), grounded[i].end());
            }
            topics::embed_topics(embedder(cfg_.roles.embedder), all);
            auto kept = topics::deduplicate_topics(std::move(all), cfg_.topics.threshold);
            persist_records(art_.topics, kept);
            save_quarantine();
            return {{"requests", corpus.requests.size()},
                    {"initial", n_initial},
                    {"grounded", n_grounded},
                    {"kept", kept.size()}};
        }

        case Stage::crawl: {
            auto topic_list = load_records<Topic>(art_.topics);
            std::map<Origin, std::unique_ptr<acquire::SourceClient>> clients;
            for (auto o : cfg_.acquire.sources) {
                clients[o] = cfg_.paths.fixtures.empty()
                                 ? acquire::make_live_client(o)
                                 : std::make_unique<acquire::FixtureSource>(cfg_.paths.fixtures, o);
            }
            struct Job {
                const Topic* topic;
                Origin source;
            };
            std::vector<Job> jobs;
            for (const auto& t : topic_list)
                for (auto o : cfg_.acquire.sources) jobs.push_back({&t, o});
            std::optional<acquire::DateRange> window;
            if (cfg_.acquire.published_after || cfg_.acquire.published_before)
                window = acquire::DateRange{cfg_.acquire.published_after, cfg_.acquire.published_before};
            RetryPolicy retry{cfg_.providers.max_attempts, std::chrono::milliseconds(cfg_.providers.backoff_ms), 2.0};
            std::vector<acquire::TaggedResult> results(jobs.size());
            std::vector<acquire::FetchOutcome> outcomes(jobs.size());
            parallel_for(jobs.size(), workers, [&](std::size_t i) {
                acquire::SourceQuery q{jobs[i].topic->id, jobs[i].source, jobs[i].topic->phrase, cfg_.acquire.ne, window};
                outcomes[i] = acquire::fetch_related_articles(*clients.at(jobs[i].source), q, retry);
                results[i] = {jobs[i].topic->id, jobs[i].source, outcomes[i].docs};
            });
            if (cfg_.acquire.ne_mode == acquire::BudgetMode::per_topic)
                results = acquire::apply_topic_budget(results, cfg_.acquire.ne);
            auto articles = acquire::aggregate_external_corpus(results);
            std::vector<json> warnings;
            std::size_t partial = 0;
            for (std::size_t i = 0; i < jobs.size(); ++i) {
                partial += outcomes[i].partial;
                for (const auto& w : outcomes[i].warnings)
                    warnings.push_back({{"topic_id", jobs[i].topic->id},
                                        {"source", to_string(jobs[i].source)},
                                        {"message", w}});
            }
            persist_records(art_.articles, articles);
            write_json_lines(art_.crawl_warnings, warnings);
            return {{"queries", jobs.size()}, {"partial_sources", partial}, {"articles", articles.size()},
                    {"warnings", warnings.size()}};
        }

        case Stage::chunk: {
            auto corpus = load_corpus(cfg_.paths.corpus);
            auto topic_list = load_records<Topic>(art_.topics);
            auto articles = load_records<Article>(art_.articles);
            std::map<std::string, const DocumentRef*> docs;
            for (const auto& d : corpus.documents) docs[d.id] = &d;
            std::map<std::string, const Request*> requests;
            for (const auto& r : corpus.requests) requests[r.id] = &r;
            const auto& tok = default_tokenizer();

            std::vector<Chunk> chunks;
            std::vector<std::pair<const Topic*, const Request*>> owner;
            for (const auto& t : topic_list) {
                const Request* req = requests.at(t.origin_request_id);
                std::vector<const DocumentRef*> sources;
                for (const auto& gid : req->gold_doc_ids) sources.push_back(docs.at(gid));
                for (const auto& a : articles)
                    for (const auto& p : a.provenance)
                        if (p.topic_id == t.id) {
                            sources.push_back(&a.doc);
                            break;
                        }
                for (const auto* d : sources)
                    for (auto& c : genqa::chunk_documents(*d, t, *req, tok, cfg_.genqa.chunk_tokens)) {
                        chunks.push_back(std::move(c));
                        owner.emplace_back(&t, req);
                    }
            }
            Judge judge(chat(cfg_.roles.judge), quarantine);
            parallel_for(chunks.size(), workers, [&](std::size_t i) {
                genqa::filter_chunk_relevance(judge, chunks[i], *owner[i].first, *owner[i].second);
            });
            std::size_t relevant = 0, held = 0;
            for (const auto& c : chunks) {
                relevant += c.relevance_passed == true;
                held += !c.relevance_passed.has_value();
            }

            std::vector<Chunk> corpus_chunks;
            for (const auto& d : corpus.documents)
                for (auto& c : genqa::chunk_body(d, "", "", tok, cfg_.genqa.chunk_tokens))
                    corpus_chunks.push_back(std::move(c));
            std::sort(corpus_chunks.begin(), corpus_chunks.end(),
                      [](const Chunk& a, const Chunk& b) { return a.id < b.id; });
            auto index = retrieval::build_index(corpus_chunks, embedder(cfg_.roles.embedder));

            persist_records(art_.chunks, chunks);
            persist_records(art_.corpus_chunks, corpus_chunks);
            index.save(art_.corpus_index);
            save_quarantine();
            return {{"chunks", chunks.size()},
                    {"relevant", relevant},
                    {"quarantined", held},
                    {"corpus_chunks", corpus_chunks.size()}};
        }

        case Stage::generate: {
            auto chunks = load_records<Chunk>(art_.chunks);
            std::map<std::string, std::vector<Chunk>> by_topic;
            std::map<std::string, const Chunk*> chunk_map;
            for (const auto& c : chunks) {
                chunk_map[c.id] = &c;
                if (c.relevance_passed == true) by_topic[c.topic_id].push_back(c);
            }
            std::vector<ContextGroup> contexts;
            std::set<std::string> seen;
            for (const auto& [topic, cs] : by_topic)
                for (auto& g : genqa::enumerate_contexts(cs, cfg_.genqa.nc, cfg_.seed))
                    if (seen.insert(g.id).second) contexts.push_back(std::move(g));
            auto& gen = chat(cfg_.roles.generator);
            std::vector<std::vector<CrumQA>> per(contexts.size());
            parallel_for(contexts.size(), workers, [&](std::size_t i) {
                per[i] = genqa::generate_seed_qa(gen, contexts[i], chunk_map, cfg_.genqa.max_pairs);
            });
            std::vector<CrumQA> seeds;
            std::set<std::string> qa_ids;
            for (auto& v : per)
                for (auto& q : v)
                    if (qa_ids.insert(q.id).second) seeds.push_back(std::move(q));
            persist_records(art_.contexts, contexts);
            persist_records(art_.qa_seed, seeds);
            return {{"topics_with_chunks", by_topic.size()}, {"contexts", contexts.size()}, {"seeds", seeds.size()}};
        }

        case Stage::verify: {
            auto qas = load_records<CrumQA>(art_.qa_seed);
            auto corpus_chunks = load_records<Chunk>(art_.corpus_chunks);
            auto index = retrieval::VectorIndex::load(art_.corpus_index);
            vetting::ChunkMap cmap;
            for (const auto& c : corpus_chunks) cmap[c.id] = &c;
            Judge judge(chat(cfg_.roles.judge), quarantine);
            auto& emb = embedder(cfg_.roles.embedder);
            std::vector<std::optional<VerificationResult>> results(qas.size());
            parallel_for(qas.size(), workers, [&](std::size_t i) {
                if (qas[i].status.stage != QaStage::seed) return;
                results[i] = vetting::verify_unanswerability(judge, qas[i], index, emb, cmap, cfg_.vetting.verify_k);
            });
            std::vector<VerificationResult> verifications;
            std::size_t verified = 0, rejected = 0, held = 0;
            for (std::size_t i = 0; i < qas.size(); ++i) {
                if (results[i]) verifications.push_back(*results[i]);
                verified += qas[i].status.stage == QaStage::verified_unanswerable;
                rejected += qas[i].status.stage == QaStage::rejected;
                held += qas[i].status.stage == QaStage::seed;
            }
            persist_records(art_.verifications, verifications);
            persist_records(art_.qa_verified, qas);
            save_quarantine();
            return {{"seeds", qas.size()}, {"verified_unanswerable", verified}, {"verify_fail", rejected}, {"held", held}};
        }

        case Stage::filter: {
            auto qas = load_records<CrumQA>(art_.qa_verified);
            auto contexts = load_records<ContextGroup>(art_.contexts);
            auto chunks = load_records<Chunk>(art_.chunks);
            auto corpus_chunks = load_records<Chunk>(art_.corpus_chunks);
            auto verifications = load_records<VerificationResult>(art_.verifications);
            std::map<std::string, const ContextGroup*> ctx;
            for (const auto& c : contexts) ctx[c.id] = &c;
            std::map<std::string, const Chunk*> cmap;
            for (const auto& c : chunks) cmap[c.id] = &c;
            for (const auto& c : corpus_chunks) cmap[c.id] = &c;
            std::map<std::string, const VerificationResult*> ver;
            for (const auto& v : verifications) ver[v.qa_id] = &v;
            auto resolve = [&](const std::vector<std::string>& ids) {
                std::vector<const Chunk*> out;
                for (const auto& id : ids) out.push_back(cmap.at(id));
                return out;
            };
            Judge judge(chat(cfg_.roles.judge), quarantine);
            parallel_for(qas.size(), workers, [&](std::size_t i) {
                auto& qa = qas[i];
                if (qa.status.stage != QaStage::verified_unanswerable) return;
                auto oracle = resolve(ctx.at(qa.context_id)->chunk_ids);
                if (!vetting::annotate_cot(judge, qa, oracle)) return;
                vetting::filter_by_hops(qa, cfg_.vetting.keep_single_hop);
                if (qa.status.stage != QaStage::hop_checked) return;
                vetting::score_quality(judge, qa, oracle, resolve(ver.at(qa.id)->retrieved_chunk_ids));
            });
            std::vector<CrumQA> accepted;
            std::map<std::string, std::size_t> reasons;
            for (const auto& q : qas) {
                if (q.status.stage == QaStage::accepted) accepted.push_back(q);
                if (q.status.reason) ++reasons[std::string(to_string(*q.status.reason))];
            }
            persist_records(art_.qa_all, qas);
            persist_records(art_.qa_accepted, accepted);
            if (cfg_.vetting.review_sample > 0)
                persist_records(art_.review_sample, vetting::sample_for_review(qas, cfg_.vetting.review_sample, cfg_.seed));
            save_quarantine();
            return {{"pairs", qas.size()}, {"accepted", accepted.size()}, {"rejections", reasons}};
        }

        case Stage::evaluate: {
            auto qas = load_records<CrumQA>(art_.qa_accepted);
            if (cfg_.harness.sample > 0 && cfg_.harness.sample < qas.size())
                qas = harness::sample_queries(qas, cfg_.harness.sample, cfg_.seed);
            auto corpus_chunks = load_records<Chunk>(art_.corpus_chunks);
            std::map<std::string, std::string> texts;
            for (const auto& c : corpus_chunks) texts[c.id] = c.text;
            std::map<std::string, std::unique_ptr<retrieval::VectorIndex>> indexes;
            std::unique_ptr<retrieval::LexicalIndex> lexical;
            Judge judge(chat(cfg_.roles.judge), quarantine);
            std::vector<EvalRecord> records;
            std::size_t held = 0;
            for (const auto& rc : cfg_.rag) {
                auto& emb = embedder(rc.embedding);
                auto& idx = indexes[rc.embedding];
                if (!idx) {
                    auto saved = retrieval::VectorIndex::load(art_.corpus_index);
                    idx = std::make_unique<retrieval::VectorIndex>(
                        saved.embedder_identity() == emb.identity() ? std::move(saved)
                                                                    : retrieval::build_index(corpus_chunks, emb));
                }
                if (rc.retrieval == harness::RetrievalMode::ensemble && !lexical)
                    lexical = std::make_unique<retrieval::LexicalIndex>(
                        corpus_chunks, default_tokenizer(), retrieval::Bm25Params{cfg_.retrieval.k1, cfg_.retrieval.b});
                harness::RagSystem sys{&chat(rc.generator_model), &emb, idx.get(), lexical.get(),
                                       rc.reranker ? impl_->rerankers.find(*rc.reranker).get() : nullptr, &texts};
                harness::check_config(rc, sys);
                std::vector<std::optional<EvalRecord>> out(qas.size());
                parallel_for(qas.size(), workers, [&](std::size_t i) {
                    out[i] = harness::evaluate_query(rc, sys, judge, qas[i]);
                });
                for (auto& r : out) {
                    if (r) {
                        records.push_back(std::move(*r));
                    } else {
                        ++held;
                    }
                }
            }
            std::size_t errored = 0;
            for (const auto& r : records) errored += r.error.has_value();
            persist_records(art_.eval_records, records);
            save_quarantine();
            return {{"queries", qas.size()}, {"configs", cfg_.rag.size()}, {"records", records.size()},
                    {"errored", errored}, {"quarantined", held}};
        }

        case Stage::probe: {
            auto qas = load_records<CrumQA>(art_.qa_accepted);
            auto contexts = load_records<ContextGroup>(art_.contexts);
            std::map<std::string, const ContextGroup*> ctx;
            for (const auto& c : contexts) ctx[c.id] = &c;
            std::vector<ProbeInstance> probes;
            std::size_t skipped = 0;
            for (const auto& qa : qas) {
                auto pair = harness::build_dire_probe(qa, ctx.at(qa.context_id)->chunk_ids, cfg_.seed);
                if (!pair) {
                    ++skipped;
                    continue;
                }
                probes.push_back(pair->first);
                probes.push_back(pair->second);
            }
            persist_records(art_.probes, probes);
            return {{"pairs", qas.size()}, {"probes", probes.size() / 2}, {"skipped", skipped}};
        }

        case Stage::cheatability: {
            auto qas = load_records<CrumQA>(art_.qa_accepted);
            auto contexts = load_records<ContextGroup>(art_.contexts);
            auto chunks = load_records<Chunk>(art_.chunks);
            auto probes = load_records<ProbeInstance>(art_.probes);
            std::map<std::string, ContextGroup> ctx;
            for (const auto& c : contexts) ctx[c.id] = c;
            std::map<std::string, const Chunk*> cmap;
            for (const auto& c : chunks) cmap[c.id] = &c;
            std::vector<CheatabilityReport> reports;
            json scored = json::object();
            for (const auto& model : cfg_.harness.cheat_models) {
                Judge judge(chat(model), quarantine);
                auto sc = harness::score_cheatability(judge, qas, ctx, cmap, probes, cfg_.harness.probe_credit, workers);
                scored[model] = sc.qa_ids.size();
                const auto id = chat(model).identity();
                for (auto [task, full, probe] :
                     {std::tuple{CheatTask::answer_prediction, &sc.answer_full, &sc.answer_probe},
                      std::tuple{CheatTask::support_identification, &sc.support_full, &sc.support_probe}}) {
                    try {
                        reports.push_back(harness::compute_cheatability(id, task, *full, *probe));
                    } catch (const Error& e) {
                        spdlog::warn("cheatability {} {}: {}", id, to_string(task), e.what());
                    }
                }
            }
            fs::create_directories(art_.reports);
            persist_records(art_.cheatability, reports);
            save_quarantine();
            return {{"scored", scored}, {"reports", reports.size()}};
        }

        case Stage::report: {
            auto records = load_records<EvalRecord>(art_.eval_records);
            auto qas = load_records<CrumQA>(art_.qa_accepted);
            std::map<std::string, int> hops;
            for (const auto& q : qas) hops[q.id] = q.hop_count.value_or(0);
            std::map<std::string, std::vector<EvalRecord>> by_config;
            for (auto& r : records) by_config[r.config_id].push_back(r);
            std::vector<harness::MetricsReport> reports;
            std::vector<json> rows;
            for (const auto& [id, rs] : by_config) {
                try {
                    reports.push_back(harness::compute_unanswerability_metrics(rs, hops));
                    rows.push_back(metrics_json(reports.back()));
                } catch (const PreconditionError& e) {
                    spdlog::warn("report {}: {}", id, e.what());
                }
            }
            fs::create_directories(art_.reports);
            write_json_lines(art_.reports / "metrics.jsonl", rows);
            write_file_atomic(art_.reports / "metrics.csv", harness::format_metrics_csv(reports));
            write_file_atomic(art_.reports / "metrics.txt", harness::format_metrics_table(reports));

            std::vector<std::pair<std::string, double>> pvals;
            auto metric = harness::parse_metric(cfg_.harness.significance_metric);
            for (auto a = by_config.begin(); a != by_config.end(); ++a)
                for (auto b = std::next(a); b != by_config.end(); ++b) {
                    try {
                        pvals.emplace_back(a->first + " vs " + b->first,
                                           harness::paired_significance(a->second, b->second, metric,
                                                                        cfg_.harness.n_resamples, cfg_.seed));
                    } catch (const PreconditionError& e) {
                        spdlog::warn("significance {} vs {}: {}", a->first, b->first, e.what());
                    }
                }
            std::vector<json> sig;
            auto decisions = harness::holm_bonferroni(pvals, cfg_.harness.alpha);
            for (std::size_t i = 0; i < pvals.size(); ++i)
                sig.push_back({{"comparison", pvals[i].first},
                               {"metric", cfg_.harness.significance_metric},
                               {"p_value", pvals[i].second},
                               {"rejected", decisions[i].second}});
            write_json_lines(art_.reports / "significance.jsonl", sig);

            std::vector<CheatabilityReport> cheat;
            if (fs::exists(art_.cheatability)) cheat = load_records<CheatabilityReport>(art_.cheatability);
            write_file_atomic(art_.reports / "cheatability.csv", harness::format_cheatability_csv(cheat));
            write_file_atomic(art_.reports / "cheatability.txt", harness::format_cheatability_table(cheat));
            return {{"configs", reports.size()}, {"comparisons", pvals.size()}, {"cheatability_reports", cheat.size()}};
        }
    }
    return json::object();
}

}  // namespace crumq
