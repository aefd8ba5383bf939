#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crumq/acquire/source.hpp"
#include "crumq/harness/harness.hpp"

namespace crumq {

struct ModelSpec {
    std::string kind = "mock";  // mock | openai_compatible
    std::filesystem::path fixtures;  // mock: scripted response table (JSON)
    std::string provider;
    std::string model;
    std::string base_url;
};

struct EmbedderSpec {
    std::string kind = "hash_projection";  // hash_projection | openai_compatible
    std::size_t dimension = 256;
    std::uint64_t seed = 0;
    std::string provider;
    std::string model;
    std::string base_url;
};

struct Config {
    std::uint64_t seed = 0;
    int workers = 1;

    struct Paths {
        std::filesystem::path corpus;
        std::filesystem::path out = "out";
        /// Recorded feed responses; when set, crawling replays them instead of
        /// calling live services.
        std::filesystem::path fixtures;
        /// Directory of prompt files overriding the bundled ones.
        std::filesystem::path prompts;
        /// Provider call cache; defaults to <out>/cache.
        std::filesystem::path cache;
    } paths;

    std::map<std::string, ModelSpec> models;
    std::map<std::string, EmbedderSpec> embedders;

    struct Roles {
        std::string generator = "mock";
        std::string judge = "mock";
        std::string embedder = "hash";
    } roles;

    struct Topics {
        double threshold = 0.95;
    } topics;

    struct Acquire {
        int ne = acquire::kDefaultMaxResults;
        acquire::BudgetMode ne_mode = acquire::BudgetMode::per_source;
        std::vector<Origin> sources;
        std::optional<std::string> published_after;
        std::optional<std::string> published_before;
    } acquire;

    struct Genqa {
        int chunk_tokens = Chunk::kMaxTokens;
        std::size_t nc = 50;
        int max_pairs = 10;
    } genqa;

    struct Vetting {
        std::size_t verify_k = VerificationResult::kTopK;
        bool keep_single_hop = false;
        std::size_t review_sample = 0;
    } vetting;

    struct Retrieval {
        double rrf_constant = 60.0;
        std::size_t candidate_depth = 100;
        double k1 = 1.2;
        double b = 0.75;
    } retrieval;

    struct Harness {
        double alpha = 0.05;
        int n_resamples = 1000;
        harness::ProbeCredit probe_credit = harness::ProbeCredit::max;
        /// Queries evaluated per configuration; 0 keeps all.
        std::size_t sample = 0;
        /// Models scored for cheatability; defaults to the generator role.
        std::vector<std::string> cheat_models;
        std::string significance_metric = "acceptable";
    } harness;

    struct Providers {
        int max_attempts = 4;
        int backoff_ms = 200;
        int max_in_flight = 8;
    } providers;

    std::vector<harness::RagConfig> rag;

    std::filesystem::path cache_dir() const {
        return paths.cache.empty() ? paths.out / "cache" : paths.cache;
    }
};

/// Parses and validates TOML configuration text. Relative paths resolve
/// against `base_dir`; `${VAR}` in strings expands from the environment.
/// Every violation is collected and reported together in one ConfigError,
/// each prefixed with its key path.
Config parse_config(std::string_view toml_text, const std::filesystem::path& base_dir = {});
Config load_config(const std::filesystem::path& path);

/// Normalized configuration as JSON (defaults filled in).
nlohmann::json config_to_json(const Config& c);

}  // namespace crumq
