#include "crumq/pipeline/config.hpp"

#include <cstdlib>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "crumq/core/errors.hpp"
#include "crumq/core/jsonl.hpp"

namespace crumq {

namespace {

class Reader {
  public:
    explicit Reader(std::filesystem::path base) : base_(std::move(base)) {}

    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    // Reports keys of `t` outside `known`.
    void only(const toml::table& t, const std::string& path, std::initializer_list<std::string_view> known) {
        for (auto&& [k, _] : t) {
            bool ok = false;
            for (auto n : known) ok = ok || k.str() == n;
            if (!ok) fail(join(path, k.str()), "unknown key");
        }
    }

    static std::string join(const std::string& path, std::string_view key) {
        return path.empty() ? std::string(key) : path + "." + std::string(key);
    }

    std::string expand(const std::string& s, const std::string& path) {
        std::string out;
        std::size_t pos = 0;
        while (true) {
            auto open = s.find("${", pos);
            if (open == std::string::npos) break;
            auto close = s.find('}', open + 2);
            if (close == std::string::npos) break;
            out.append(s, pos, open - pos);
            auto name = s.substr(open + 2, close - open - 2);
            const char* v = std::getenv(name.c_str());
            if (!v) {
                fail(path, "environment variable " + name + " is not set");
            } else {
                out += v;
            }
            pos = close + 1;
        }
        out.append(s, pos, std::string::npos);
        return out;
    }

    void str(const toml::table& t, const std::string& path, std::string_view key, std::string& out) {
        auto n = t.get(key);
        if (!n) return;
        auto p = join(path, key);
        if (auto v = n->value<std::string>()) {
            out = expand(*v, p);
        } else {
            fail(p, "expected a string");
        }
    }

    void opt_str(const toml::table& t, const std::string& path, std::string_view key,
                 std::optional<std::string>& out) {
        if (!t.get(key)) return;
        std::string v;
        str(t, path, key, v);
        out = v;
    }

    void path_of(const toml::table& t, const std::string& path, std::string_view key,
                 std::filesystem::path& out) {
        if (!t.get(key)) return;
        std::string v;
        str(t, path, key, v);
        out = resolve(v);
    }

    std::filesystem::path resolve(const std::string& v) const {
        if (v.empty()) return {};
        std::filesystem::path p(v);
        return p.is_absolute() || base_.empty() ? p : base_ / p;
    }

    template <typename T>
    void integer(const toml::table& t, const std::string& path, std::string_view key, T& out,
                 long long lo, long long hi) {
        auto n = t.get(key);
        if (!n) return;
        auto p = join(path, key);
        auto v = n->value_exact<std::int64_t>();
        if (!v) {
            fail(p, "expected an integer");
        } else if (*v < lo || *v > hi) {
            fail(p, "value " + std::to_string(*v) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
        } else {
            out = static_cast<T>(*v);
        }
    }

    // Range check: lo < v <= hi (open_lo) or lo <= v <= hi, hi exclusive when open_hi.
    void real(const toml::table& t, const std::string& path, std::string_view key, double& out,
              double lo, double hi, bool open_lo, bool open_hi) {
        auto n = t.get(key);
        if (!n) return;
        auto p = join(path, key);
        std::optional<double> v;
        if (auto d = n->value_exact<double>()) v = *d;
        if (auto i = n->value_exact<std::int64_t>()) v = static_cast<double>(*i);
        if (!v) {
            fail(p, "expected a number");
            return;
        }
        bool ok = (open_lo ? *v > lo : *v >= lo) && (open_hi ? *v < hi : *v <= hi);
        if (!ok) {
            fail(p, "value " + std::to_string(*v) + " outside " + (open_lo ? "(" : "[") + std::to_string(lo) +
                        ", " + std::to_string(hi) + (open_hi ? ")" : "]"));
            return;
        }
        out = *v;
    }

    void boolean(const toml::table& t, const std::string& path, std::string_view key, bool& out) {
        auto n = t.get(key);
        if (!n) return;
        if (auto v = n->value_exact<bool>()) {
            out = *v;
        } else {
            fail(join(path, key), "expected a boolean");
        }
    }

    void strings(const toml::table& t, const std::string& path, std::string_view key,
                 std::vector<std::string>& out) {
        auto n = t.get(key);
        if (!n) return;
        auto p = join(path, key);
        auto arr = n->as_array();
        if (!arr) {
            fail(p, "expected an array of strings");
            return;
        }
        out.clear();
        for (std::size_t i = 0; i < arr->size(); ++i) {
            auto v = (*arr)[i].value<std::string>();
            if (!v) {
                fail(p + "[" + std::to_string(i) + "]", "expected a string");
            } else {
                out.push_back(expand(*v, p));
            }
        }
    }

    const toml::table* table(const toml::table& t, const std::string& path, std::string_view key) {
        auto n = t.get(key);
        if (!n) return nullptr;
        if (!n->is_table()) {
            fail(join(path, key), "expected a table");
            return nullptr;
        }
        return n->as_table();
    }

  private:
    std::filesystem::path base_;
};

bool iso_date(const std::string& s) {
    static const std::regex re(R"(\d{4}-\d{2}-\d{2}.*)");
    return std::regex_match(s, re);
}

}  // namespace

Config parse_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
    Reader r(base_dir);
    Config c;
    r.only(root, "", {"seed", "workers", "paths", "models", "embedders", "roles", "topics", "acquire",
                      "genqa", "vetting", "retrieval", "harness", "providers", "rag"});
    r.integer(root, "", "seed", c.seed, 0, std::numeric_limits<std::int64_t>::max());
    r.integer(root, "", "workers", c.workers, 1, 1024);

    if (auto t = r.table(root, "", "paths")) {
        r.only(*t, "paths", {"corpus", "out", "fixtures", "prompts", "cache"});
        r.path_of(*t, "paths", "corpus", c.paths.corpus);
        r.path_of(*t, "paths", "out", c.paths.out);
        r.path_of(*t, "paths", "fixtures", c.paths.fixtures);
        r.path_of(*t, "paths", "prompts", c.paths.prompts);
        r.path_of(*t, "paths", "cache", c.paths.cache);
    } else {
        c.paths.out = r.resolve("out");
    }

    if (auto t = r.table(root, "", "models")) {
        for (auto&& [name, node] : *t) {
            auto p = "models." + std::string(name.str());
            if (!node.is_table()) {
                r.fail(p, "expected a table");
                continue;
            }
            const auto& m = *node.as_table();
            r.only(m, p, {"kind", "fixtures", "provider", "model", "base_url"});
            ModelSpec spec;
            r.str(m, p, "kind", spec.kind);
            r.path_of(m, p, "fixtures", spec.fixtures);
            r.str(m, p, "provider", spec.provider);
            r.str(m, p, "model", spec.model);
            r.str(m, p, "base_url", spec.base_url);
            if (spec.kind != "mock" && spec.kind != "openai_compatible")
                r.fail(p + ".kind", "expected mock or openai_compatible");
            if (spec.kind == "openai_compatible" && (spec.provider.empty() || spec.model.empty()))
                r.fail(p, "openai_compatible models need provider and model");
            c.models[std::string(name.str())] = spec;
        }
    } else {
        c.models["mock"] = ModelSpec{};
    }

    if (auto t = r.table(root, "", "embedders")) {
        for (auto&& [name, node] : *t) {
            auto p = "embedders." + std::string(name.str());
            if (!node.is_table()) {
                r.fail(p, "expected a table");
                continue;
            }
            const auto& m = *node.as_table();
            r.only(m, p, {"kind", "dimension", "seed", "provider", "model", "base_url"});
            EmbedderSpec spec;
            r.str(m, p, "kind", spec.kind);
            r.integer(m, p, "dimension", spec.dimension, 1, 65536);
            r.integer(m, p, "seed", spec.seed, 0, std::numeric_limits<std::int64_t>::max());
            r.str(m, p, "provider", spec.provider);
            r.str(m, p, "model", spec.model);
            r.str(m, p, "base_url", spec.base_url);
            if (spec.kind != "hash_projection" && spec.kind != "openai_compatible")
                r.fail(p + ".kind", "expected hash_projection or openai_compatible");
            if (spec.kind == "openai_compatible" && (spec.provider.empty() || spec.model.empty()))
                r.fail(p, "openai_compatible embedders need provider and model");
            c.embedders[std::string(name.str())] = spec;
        }
    } else {
        c.embedders["hash"] = EmbedderSpec{};
    }

    if (auto t = r.table(root, "", "roles")) {
        r.only(*t, "roles", {"generator", "judge", "embedder"});
        r.str(*t, "roles", "generator", c.roles.generator);
        r.str(*t, "roles", "judge", c.roles.judge);
        r.str(*t, "roles", "embedder", c.roles.embedder);
    }
    if (!c.models.count(c.roles.generator)) r.fail("roles.generator", "unknown model '" + c.roles.generator + "'");
    if (!c.models.count(c.roles.judge)) r.fail("roles.judge", "unknown model '" + c.roles.judge + "'");
    if (!c.embedders.count(c.roles.embedder))
        r.fail("roles.embedder", "unknown embedder '" + c.roles.embedder + "'");

    if (auto t = r.table(root, "", "topics")) {
        r.only(*t, "topics", {"threshold"});
        r.real(*t, "topics", "threshold", c.topics.threshold, 0.0, 1.0, true, false);
    }

    c.acquire.sources = external_origins();
    if (auto t = r.table(root, "", "acquire")) {
        r.only(*t, "acquire", {"ne", "ne_mode", "sources", "published_after", "published_before"});
        r.integer(*t, "acquire", "ne", c.acquire.ne, 1, 100000);
        if (t->get("ne_mode")) {
            std::string mode;
            r.str(*t, "acquire", "ne_mode", mode);
            try {
                c.acquire.ne_mode = acquire::parse_budget_mode(mode);
            } catch (const ConfigError& e) {
                r.fail("acquire.ne_mode", e.what());
            }
        }
        if (t->get("sources")) {
            std::vector<std::string> names;
            r.strings(*t, "acquire", "sources", names);
            c.acquire.sources.clear();
            for (const auto& n : names) {
                try {
                    auto o = parse_origin(n);
                    if (o == Origin::corpus) throw FormatError("corpus is not an external source");
                    c.acquire.sources.push_back(o);
                } catch (const FormatError& e) {
                    r.fail("acquire.sources", e.what());
                }
            }
        }
        r.opt_str(*t, "acquire", "published_after", c.acquire.published_after);
        r.opt_str(*t, "acquire", "published_before", c.acquire.published_before);
        if (c.acquire.published_after && !iso_date(*c.acquire.published_after))
            r.fail("acquire.published_after", "expected YYYY-MM-DD");
        if (c.acquire.published_before && !iso_date(*c.acquire.published_before))
            r.fail("acquire.published_before", "expected YYYY-MM-DD");
    }

    if (auto t = r.table(root, "", "genqa")) {
        r.only(*t, "genqa", {"chunk_tokens", "nc", "max_pairs"});
        r.integer(*t, "genqa", "chunk_tokens", c.genqa.chunk_tokens, 1, Chunk::kMaxTokens);
        r.integer(*t, "genqa", "nc", c.genqa.nc, 1, 1000000);
        r.integer(*t, "genqa", "max_pairs", c.genqa.max_pairs, 1, 1000);
    }

    if (auto t = r.table(root, "", "vetting")) {
        r.only(*t, "vetting", {"verify_k", "keep_single_hop", "review_sample"});
        r.integer(*t, "vetting", "verify_k", c.vetting.verify_k, 1, 1000);
        r.boolean(*t, "vetting", "keep_single_hop", c.vetting.keep_single_hop);
        r.integer(*t, "vetting", "review_sample", c.vetting.review_sample, 0, 1000000);
    }

    if (auto t = r.table(root, "", "retrieval")) {
        r.only(*t, "retrieval", {"rrf_constant", "candidate_depth", "k1", "b"});
        r.real(*t, "retrieval", "rrf_constant", c.retrieval.rrf_constant, 0.0, 1e9, false, false);
        r.integer(*t, "retrieval", "candidate_depth", c.retrieval.candidate_depth, 1, 1000000);
        r.real(*t, "retrieval", "k1", c.retrieval.k1, 0.0, 100.0, false, false);
        r.real(*t, "retrieval", "b", c.retrieval.b, 0.0, 1.0, false, false);
    }

    if (auto t = r.table(root, "", "harness")) {
        r.only(*t, "harness", {"alpha", "n_resamples", "probe_credit", "sample", "cheat_models",
                               "significance_metric"});
        r.real(*t, "harness", "alpha", c.harness.alpha, 0.0, 1.0, true, true);
        r.integer(*t, "harness", "n_resamples", c.harness.n_resamples, harness::kMinResamples, 100000000);
        if (t->get("probe_credit")) {
            std::string v;
            r.str(*t, "harness", "probe_credit", v);
            try {
                c.harness.probe_credit = harness::parse_probe_credit(v);
            } catch (const ConfigError& e) {
                r.fail("harness.probe_credit", e.what());
            }
        }
        r.integer(*t, "harness", "sample", c.harness.sample, 0, 100000000);
        r.strings(*t, "harness", "cheat_models", c.harness.cheat_models);
        r.str(*t, "harness", "significance_metric", c.harness.significance_metric);
        try {
            harness::parse_metric(c.harness.significance_metric);
        } catch (const ConfigError& e) {
            r.fail("harness.significance_metric", e.what());
        }
    }
    if (c.harness.cheat_models.empty()) c.harness.cheat_models.push_back(c.roles.generator);
    for (const auto& m : c.harness.cheat_models)
        if (!c.models.count(m)) r.fail("harness.cheat_models", "unknown model '" + m + "'");

    if (auto t = r.table(root, "", "providers")) {
        r.only(*t, "providers", {"max_attempts", "backoff_ms", "max_in_flight"});
        r.integer(*t, "providers", "max_attempts", c.providers.max_attempts, 1, 100);
        r.integer(*t, "providers", "backoff_ms", c.providers.backoff_ms, 0, 600000);
        r.integer(*t, "providers", "max_in_flight", c.providers.max_in_flight, 1, 1024);
    }

    if (auto n = root.get("rag")) {
        auto arr = n->as_array();
        if (!arr) {
            r.fail("rag", "expected an array of tables ([[rag]])");
        } else {
            std::set<std::string> ids;
            for (std::size_t i = 0; i < arr->size(); ++i) {
                auto p = "rag[" + std::to_string(i) + "]";
                auto t = (*arr)[i].as_table();
                if (!t) {
                    r.fail(p, "expected a table");
                    continue;
                }
                r.only(*t, p, {"id", "generator_model", "embedding", "retrieval", "reranker", "rewriting", "top_k"});
                harness::RagConfig rc;
                rc.generator_model = c.roles.generator;
                rc.embedding = c.roles.embedder;
                r.str(*t, p, "id", rc.id);
                r.str(*t, p, "generator_model", rc.generator_model);
                r.str(*t, p, "embedding", rc.embedding);
                std::string retrieval = "vector", rewriting = "none";
                r.str(*t, p, "retrieval", retrieval);
                r.str(*t, p, "rewriting", rewriting);
                r.opt_str(*t, p, "reranker", rc.reranker);
                r.integer(*t, p, "top_k", rc.top_k, 1, 100000);
                try {
                    rc.retrieval = harness::parse_retrieval_mode(retrieval);
                } catch (const ConfigError& e) {
                    r.fail(p + ".retrieval", e.what());
                }
                try {
                    rc.rewriting = harness::parse_rewriting(rewriting);
                } catch (const ConfigError& e) {
                    r.fail(p + ".rewriting", e.what());
                }
                if (rc.id.empty()) r.fail(p + ".id", "required");
                if (!ids.insert(rc.id).second) r.fail(p + ".id", "duplicate id '" + rc.id + "'");
                if (!c.models.count(rc.generator_model))
                    r.fail(p + ".generator_model", "unknown model '" + rc.generator_model + "'");
                if (!c.embedders.count(rc.embedding))
                    r.fail(p + ".embedding", "unknown embedder '" + rc.embedding + "'");
                c.rag.push_back(std::move(rc));
            }
        }
    }
    if (c.rag.empty()) {
        harness::RagConfig rc;
        rc.id = "default";
        rc.generator_model = c.roles.generator;
        rc.embedding = c.roles.embedder;
        c.rag.push_back(rc);
    }

    if (!r.errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : r.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return c;
}

Config load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    auto base = path.parent_path();
    return parse_config(text, base.empty() ? std::filesystem::path(".") : base);
}

nlohmann::json config_to_json(const Config& c) {
    using nlohmann::json;
    auto opt = [](const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); };
    json models = json::object(), embedders = json::object(), rag = json::array(), sources = json::array();
    for (const auto& [n, m] : c.models)
        models[n] = {{"kind", m.kind}, {"fixtures", m.fixtures.string()}, {"provider", m.provider},
                     {"model", m.model}, {"base_url", m.base_url}};
    for (const auto& [n, e] : c.embedders)
        embedders[n] = {{"kind", e.kind}, {"dimension", e.dimension}, {"seed", e.seed},
                        {"provider", e.provider}, {"model", e.model}, {"base_url", e.base_url}};
    for (const auto& r : c.rag)
        rag.push_back({{"id", r.id},
                       {"generator_model", r.generator_model},
                       {"embedding", r.embedding},
                       {"retrieval", harness::to_string(r.retrieval)},
                       {"reranker", opt(r.reranker)},
                       {"rewriting", harness::to_string(r.rewriting)},
                       {"top_k", r.top_k}});
    for (auto o : c.acquire.sources) sources.push_back(to_string(o));
    return json{
        {"seed", c.seed},
        {"workers", c.workers},
        {"paths",
         {{"corpus", c.paths.corpus.string()},
          {"out", c.paths.out.string()},
          {"fixtures", c.paths.fixtures.string()},
          {"prompts", c.paths.prompts.string()},
          {"cache", c.cache_dir().string()}}},
        {"models", models},
        {"embedders", embedders},
        {"roles", {{"generator", c.roles.generator}, {"judge", c.roles.judge}, {"embedder", c.roles.embedder}}},
        {"topics", {{"threshold", c.topics.threshold}}},
        {"acquire",
         {{"ne", c.acquire.ne},
          {"ne_mode", c.acquire.ne_mode == acquire::BudgetMode::per_source ? "per_source" : "per_topic"},
          {"sources", sources},
          {"published_after", opt(c.acquire.published_after)},
          {"published_before", opt(c.acquire.published_before)}}},
        {"genqa", {{"chunk_tokens", c.genqa.chunk_tokens}, {"nc", c.genqa.nc}, {"max_pairs", c.genqa.max_pairs}}},
        {"vetting",
         {{"verify_k", c.vetting.verify_k},
          {"keep_single_hop", c.vetting.keep_single_hop},
          {"review_sample", c.vetting.review_sample}}},
        {"retrieval",
         {{"rrf_constant", c.retrieval.rrf_constant},
          {"candidate_depth", c.retrieval.candidate_depth},
          {"k1", c.retrieval.k1},
          {"b", c.retrieval.b}}},
        {"harness",
         {{"alpha", c.harness.alpha},
          {"n_resamples", c.harness.n_resamples},
          {"probe_credit", c.harness.probe_credit == harness::ProbeCredit::max ? "max" : "conjunctive"},
          {"sample", c.harness.sample},
          {"cheat_models", c.harness.cheat_models},
          {"significance_metric", c.harness.significance_metric}}},
        {"providers",
         {{"max_attempts", c.providers.max_attempts},
          {"backoff_ms", c.providers.backoff_ms},
          {"max_in_flight", c.providers.max_in_flight}}},
        {"rag", rag},
    };
}

}  // namespace crumq
