#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crumq/core/types.hpp"
#include "crumq/providers/judge.hpp"
#include "crumq/retrieval/retrieval.hpp"

namespace crumq::harness {

enum class RetrievalMode { vector, ensemble };
enum class Rewriting { none, hyde };

RetrievalMode parse_retrieval_mode(std::string_view s);
Rewriting parse_rewriting(std::string_view s);
std::string_view to_string(RetrievalMode m);
std::string_view to_string(Rewriting r);

struct RagConfig {
    std::string id;
    std::string generator_model;
    std::string embedding;
    RetrievalMode retrieval = RetrievalMode::vector;
    std::optional<std::string> reranker;
    Rewriting rewriting = Rewriting::none;
    std::size_t top_k = 10;
};

/// Everything a RAG configuration runs against.
struct RagSystem {
    ChatClient* generator = nullptr;
    EmbeddingClient* embedder = nullptr;
    const retrieval::VectorIndex* index = nullptr;
    const retrieval::LexicalIndex* lexical = nullptr;
    retrieval::Reranker* reranker = nullptr;
    const std::map<std::string, std::string>* chunk_texts = nullptr;
};

/// Throws ConfigError if the configuration cannot run on `system`.
void check_config(const RagConfig& config, const RagSystem& system);

struct RagTrace {
    std::string response;
    /// Text that was embedded for dense retrieval (the HyDE passage when
    /// rewriting is on).
    std::string search_text;
    std::vector<std::string> retrieved_chunk_ids;
    std::optional<std::string> error;
};

/// Optional rewrite, top_k retrieval, optional rerank, then generation over
/// the retrieved passages. Provider failures are returned in `error`.
RagTrace run_rag(const RagConfig& config, RagSystem& system, const std::string& query);

std::optional<ResponseLabel> parse_response_label(std::string_view text);
std::optional<ResponseLabel> classify_response(Judge& judge, const std::string& response,
                                               std::string_view item_id);
std::optional<bool> judge_accuracy(Judge& judge, const std::string& question,
                                   const std::string& predicted, const std::string& target,
                                   std::string_view item_id);

/// Runs one query through a configuration and judges the response. Returns
/// nullopt if a judgment was quarantined.
std::optional<EvalRecord> evaluate_query(const RagConfig& config, RagSystem& system, Judge& judge,
                                         const CrumQA& qa);

struct Ratios {
    std::size_t n = 0;
    std::size_t refusals = 0;
    std::size_t clarifications = 0;
    std::size_t correct = 0;
    double unanswered = 0.0;
    double clarification = 0.0;
    double acceptable = 0.0;
    double accuracy = 0.0;
};

struct MetricsReport {
    std::string config_id;
    Ratios overall;
    /// Keyed by hop count; 0 collects queries without a known hop count.
    std::map<int, Ratios> by_hop;
    std::size_t errored = 0;
    double error_rate = 0.0;
};

/// Ratios over non-errored records of one configuration. Throws
/// PreconditionError on empty input, mixed configurations, or when every
/// record errored.
MetricsReport compute_unanswerability_metrics(const std::vector<EvalRecord>& records,
                                              const std::map<std::string, int>& hop_counts = {});

/// Two-way partition of the QA's context: singletons for two chunks, a seeded
/// floor/ceil split otherwise. nullopt (with a warning) for fewer than two
/// chunks.
std::optional<std::pair<ProbeInstance, ProbeInstance>> build_dire_probe(
    const CrumQA& qa, const std::vector<std::string>& context_chunk_ids, std::uint64_t seed);

/// Lowercased, punctuation-free, whitespace-split tokens.
std::vector<std::string> normalize_answer_tokens(std::string_view s);
double token_f1(std::string_view predicted, std::string_view gold);
double support_f1(const std::set<std::string>& predicted, const std::set<std::string>& gold);

enum class ProbeCredit { max, conjunctive };
ProbeCredit parse_probe_credit(std::string_view s);
double probe_credit(double part0, double part1, ProbeCredit mode);

CheatabilityReport compute_cheatability(const std::string& model_id, CheatTask task,
                                        const std::vector<double>& full_scores,
                                        const std::vector<double>& probe_scores);

struct AnswerSupport {
    std::string answer;
    std::set<int> support;  // passage numbers
};
std::optional<AnswerSupport> parse_answer_support(std::string_view text, int n_passages);

/// Per-query scores for both cheatability tasks.
struct CheatScores {
    std::vector<std::string> qa_ids;
    std::vector<double> answer_full, answer_probe;
    std::vector<double> support_full, support_probe;
};

/// Asks `model` for answer and supporting passages with the full context and
/// with each probe part. Gold support is the set of chunks the pair's CoT
/// cites (its whole context if it has none). Queries with a quarantined reply
/// are left out.
CheatScores score_cheatability(Judge& model, const std::vector<CrumQA>& qas,
                               const std::map<std::string, ContextGroup>& contexts,
                               const std::map<std::string, const Chunk*>& chunks,
                               const std::vector<ProbeInstance>& probes, ProbeCredit credit,
                               int workers = 1);

/// Step-down Holm-Bonferroni. Results follow input order.
std::vector<std::pair<std::string, bool>> holm_bonferroni(
    const std::vector<std::pair<std::string, double>>& p_values, double alpha = 0.05);

inline constexpr int kMinResamples = 1000;

/// Two-sided paired bootstrap on per-query differences a[i] - b[i]: the
/// differences are centered under the null and resampled with replacement.
/// p = (1 + #{|resampled mean| >= |observed mean|}) / (1 + n_resamples).
/// Resamples run on OpenMP threads, each with its own derived seed.
double paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                        int n_resamples, std::uint64_t seed);
/// Single-threaded reference for `paired_bootstrap`; same result.
double paired_bootstrap_serial(const std::vector<double>& a, const std::vector<double>& b,
                               int n_resamples, std::uint64_t seed);

enum class Metric { acceptable, unanswered, clarification, accuracy };
Metric parse_metric(std::string_view s);
double metric_value(const EvalRecord& r, Metric m);

/// Aligns two configurations' records by query id and bootstraps the metric
/// difference. Errored records drop their query from both sides. Throws
/// PreconditionError when the query sets differ.
double paired_significance(const std::vector<EvalRecord>& a, const std::vector<EvalRecord>& b,
                           Metric metric, int n_resamples, std::uint64_t seed);

/// Seeded uniform sample of n ids without replacement, returned sorted.
std::vector<std::string> sample_ids(std::vector<std::string> ids, std::size_t n, std::uint64_t seed);

template <typename T>
std::vector<T> sample_queries(const std::vector<T>& queries, std::size_t n, std::uint64_t seed) {
    std::vector<std::string> ids;
    std::map<std::string, const T*> by_id;
    for (const auto& q : queries) {
        ids.push_back(record_key(q));
        by_id[record_key(q)] = &q;
    }
    std::vector<T> out;
    for (const auto& id : sample_ids(std::move(ids), n, seed)) out.push_back(*by_id.at(id));
    return out;
}

// Report rendering.
std::string format_metrics_table(const std::vector<MetricsReport>& reports);
std::string format_metrics_csv(const std::vector<MetricsReport>& reports);
std::string format_cheatability_table(const std::vector<CheatabilityReport>& reports);
std::string format_cheatability_csv(const std::vector<CheatabilityReport>& reports);

}  // namespace crumq::harness
