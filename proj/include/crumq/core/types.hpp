#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace crumq {

using Vector = std::vector<float>;

enum class SourceKind { gold, external };
enum class Origin { corpus, google_news, arxiv, biorxiv, chemrxiv, medrxiv, pubmed };
enum class TopicStage { initial, grounded };
enum class UnanswerableKind { fully_unanswerable, partially_unanswerable };
enum class RejectReason { relevance_fail, verify_fail, hop_mismatch, quality_fail };
enum class QaStage { seed, verified_unanswerable, hop_checked, accepted, rejected };
enum class ResponseLabel { attempted_answer, refusal, clarification_request };
enum class CheatTask { answer_prediction, support_identification };

std::string_view to_string(SourceKind v);
std::string_view to_string(Origin v);
std::string_view to_string(TopicStage v);
std::string_view to_string(UnanswerableKind v);
std::string_view to_string(RejectReason v);
std::string_view to_string(QaStage v);
std::string_view to_string(ResponseLabel v);
std::string_view to_string(CheatTask v);

// Parsers throw FormatError on unknown names.
SourceKind parse_source_kind(std::string_view s);
Origin parse_origin(std::string_view s);
TopicStage parse_topic_stage(std::string_view s);
UnanswerableKind parse_unanswerable_kind(std::string_view s);
RejectReason parse_reject_reason(std::string_view s);
ResponseLabel parse_response_label(std::string_view s);
CheatTask parse_cheat_task(std::string_view s);

/// The six external origins, in canonical order.
const std::vector<Origin>& external_origins();

struct DocumentRef {
    std::string id;
    SourceKind source_kind = SourceKind::gold;
    Origin origin = Origin::corpus;
    std::optional<std::string> url;
    std::string title;
    std::optional<std::string> published_at;  // ISO-8601 date or date-time
    std::string body;

    /// Builds a document with its content-derived id. `key` is the url for
    /// external documents and the corpus key for gold documents.
    static DocumentRef make(Origin origin, std::string_view key, std::string title,
                            std::optional<std::string> url,
                            std::optional<std::string> published_at, std::string body);
};

struct Request {
    std::string id;
    std::string text;
    std::vector<std::string> gold_doc_ids;
};

struct Topic {
    std::string id;
    std::string phrase;
    std::string origin_request_id;
    std::optional<std::string> grounding_doc_id;
    TopicStage stage = TopicStage::initial;
    std::optional<Vector> embedding;

    static Topic make(std::string phrase, std::string origin_request_id,
                      std::optional<std::string> grounding_doc_id);
};

/// Lowercased phrase with whitespace trimmed and inner runs collapsed; topic identity.
std::string normalize_phrase(std::string_view phrase);

struct Chunk {
    static constexpr int kMaxTokens = 1024;

    std::string id;
    std::string doc_id;
    int index_in_doc = 0;
    int token_count = 0;
    std::string text;
    SourceKind source_kind = SourceKind::gold;
    std::string topic_id;
    std::string request_id;
    std::optional<bool> relevance_passed;
};

struct ContextGroup {
    static constexpr std::size_t kMinChunks = 2;
    static constexpr std::size_t kMaxChunks = 6;

    std::string id;
    std::vector<std::string> chunk_ids;
    int n_external = 0;
    int n_gold = 0;
    UnanswerableKind kind = UnanswerableKind::partially_unanswerable;

    /// Builds a group over `chunk_ids` (sorted into canonical order) and
    /// derives kind from the gold count.
    static ContextGroup make(std::vector<std::string> chunk_ids, int n_external, int n_gold);
};

struct QualityScores {
    int context_necessity = 0;
    int context_sufficiency = 0;
    int answer_correctness = 0;
    int answer_uniqueness = 0;
    int corpus_only_necessity = 0;
    int corpus_only_sufficiency = 0;

    std::array<int, 6> as_array() const;
    int min_score() const;
};

struct QaStatus {
    QaStage stage = QaStage::seed;
    std::optional<RejectReason> reason;

    static QaStatus rejected(RejectReason r) { return {QaStage::rejected, r}; }
    bool operator==(const QaStatus&) const = default;
};

std::string to_string(const QaStatus& s);
QaStatus parse_qa_status(std::string_view s);

struct CrumQA {
    std::string id;
    std::string context_id;
    std::string question;
    std::string answer;
    UnanswerableKind kind = UnanswerableKind::partially_unanswerable;
    std::optional<std::string> cot;
    std::optional<int> hop_count;
    std::optional<QualityScores> quality;
    QaStatus status;
    /// Hop count the generator claimed; cross-checked against the CoT.
    int intended_hop_count = 0;
    /// Every status the pair has held, oldest first.
    std::vector<std::string> status_history;

    static CrumQA make_seed(const ContextGroup& ctx, std::string question, std::string answer,
                            int intended_hop_count);

    /// Moves to `next`, enforcing seed -> verified_unanswerable -> hop_checked
    /// -> accepted with rejection allowed from any non-terminal state. Throws
    /// PreconditionError on any other transition.
    void advance(QaStatus next);
};

struct VerificationResult {
    static constexpr std::size_t kTopK = 10;

    std::string qa_id;
    std::vector<std::string> retrieved_chunk_ids;
    bool judged_unanswerable = false;
};

/// External article with every (topic, source) pair that retrieved it.
struct Provenance {
    std::string topic_id;
    Origin source = Origin::arxiv;
    auto operator<=>(const Provenance&) const = default;
};

struct Article {
    DocumentRef doc;
    std::vector<Provenance> provenance;
};

struct EvalRecord {
    std::string query_id;
    std::string config_id;
    std::string response_text;
    ResponseLabel label = ResponseLabel::refusal;
    std::optional<bool> accuracy_judged;
    /// Set when the RAG call failed; errored records stay out of ratios.
    std::optional<std::string> error;
    std::vector<std::string> retrieved_chunk_ids;
};

struct ProbeInstance {
    std::string qa_id;
    int part_index = 0;
    std::vector<std::string> chunk_ids;
};

struct CheatabilityReport {
    std::string model_id;
    CheatTask task = CheatTask::answer_prediction;
    double f1_full = 0.0;
    double f1_probe = 0.0;
    double ratio = 0.0;
};

// Invariant checks; throw FormatError naming the record id on violation.
void validate(const DocumentRef& d);
void validate(const Topic& t);
void validate(const Chunk& c);
void validate(const ContextGroup& g);
void validate(const QualityScores& q);
void validate(const CrumQA& qa);
void validate(const EvalRecord& r);

// Keys used to order persisted files.
inline const std::string& record_key(const DocumentRef& r) { return r.id; }
inline const std::string& record_key(const Request& r) { return r.id; }
inline const std::string& record_key(const Topic& r) { return r.id; }
inline const std::string& record_key(const Chunk& r) { return r.id; }
inline const std::string& record_key(const ContextGroup& r) { return r.id; }
inline const std::string& record_key(const CrumQA& r) { return r.id; }
inline const std::string& record_key(const VerificationResult& r) { return r.qa_id; }
inline const std::string& record_key(const Article& r) { return r.doc.id; }
std::string record_key(const EvalRecord& r);
std::string record_key(const ProbeInstance& r);
std::string record_key(const CheatabilityReport& r);

void to_json(nlohmann::json& j, const DocumentRef& v);
void from_json(const nlohmann::json& j, DocumentRef& v);
void to_json(nlohmann::json& j, const Request& v);
void from_json(const nlohmann::json& j, Request& v);
void to_json(nlohmann::json& j, const Topic& v);
void from_json(const nlohmann::json& j, Topic& v);
void to_json(nlohmann::json& j, const Chunk& v);
void from_json(const nlohmann::json& j, Chunk& v);
void to_json(nlohmann::json& j, const ContextGroup& v);
void from_json(const nlohmann::json& j, ContextGroup& v);
void to_json(nlohmann::json& j, const QualityScores& v);
void from_json(const nlohmann::json& j, QualityScores& v);
void to_json(nlohmann::json& j, const CrumQA& v);
void from_json(const nlohmann::json& j, CrumQA& v);
void to_json(nlohmann::json& j, const VerificationResult& v);
void from_json(const nlohmann::json& j, VerificationResult& v);
void to_json(nlohmann::json& j, const Article& v);
void from_json(const nlohmann::json& j, Article& v);
void to_json(nlohmann::json& j, const EvalRecord& v);
void from_json(const nlohmann::json& j, EvalRecord& v);
void to_json(nlohmann::json& j, const ProbeInstance& v);
void from_json(const nlohmann::json& j, ProbeInstance& v);
void to_json(nlohmann::json& j, const CheatabilityReport& v);
void from_json(const nlohmann::json& j, CheatabilityReport& v);

}  // namespace crumq
