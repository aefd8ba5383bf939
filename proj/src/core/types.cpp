#include "crumq/core/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"

namespace crumq {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<SourceKind, 2> kSourceKinds{{{SourceKind::gold, "gold"},
                                                  {SourceKind::external, "external"}}};
constexpr NameTable<Origin, 7> kOrigins{{{Origin::corpus, "corpus"},
                                         {Origin::google_news, "google_news"},
                                         {Origin::arxiv, "arxiv"},
                                         {Origin::biorxiv, "biorxiv"},
                                         {Origin::chemrxiv, "chemrxiv"},
                                         {Origin::medrxiv, "medrxiv"},
                                         {Origin::pubmed, "pubmed"}}};
constexpr NameTable<TopicStage, 2> kTopicStages{{{TopicStage::initial, "initial"},
                                                  {TopicStage::grounded, "grounded"}}};
constexpr NameTable<UnanswerableKind, 2> kKinds{
    {{UnanswerableKind::fully_unanswerable, "fully_unanswerable"},
     {UnanswerableKind::partially_unanswerable, "partially_unanswerable"}}};
constexpr NameTable<RejectReason, 4> kReasons{{{RejectReason::relevance_fail, "relevance_fail"},
                                                {RejectReason::verify_fail, "verify_fail"},
                                                {RejectReason::hop_mismatch, "hop_mismatch"},
                                                {RejectReason::quality_fail, "quality_fail"}}};
constexpr NameTable<QaStage, 5> kStages{{{QaStage::seed, "seed"},
                                          {QaStage::verified_unanswerable, "verified_unanswerable"},
                                          {QaStage::hop_checked, "hop_checked"},
                                          {QaStage::accepted, "accepted"},
                                          {QaStage::rejected, "rejected"}}};
constexpr NameTable<ResponseLabel, 3> kLabels{
    {{ResponseLabel::attempted_answer, "attempted_answer"},
     {ResponseLabel::refusal, "refusal"},
     {ResponseLabel::clarification_request, "clarification_request"}}};
constexpr NameTable<CheatTask, 2> kTasks{
    {{CheatTask::answer_prediction, "answer_prediction"},
     {CheatTask::support_identification, "support_identification"}}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E v) {
    for (const auto& [e, name] : table)
        if (e == v) return name;
    return "?";
}

template <typename E, std::size_t N>
E parse_name(const NameTable<E, N>& table, std::string_view s, std::string_view what) {
    for (const auto& [e, name] : table)
        if (name == s) return e;
    throw FormatError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename T>
void opt_to_json(json& j, const char* key, const std::optional<T>& v) {
    j[key] = v ? json(*v) : json(nullptr);
}

template <typename T>
void opt_from_json(const json& j, const char* key, std::optional<T>& v) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        v.reset();
    } else {
        v = it->template get<T>();
    }
}

void check(bool ok, std::string_view id, const std::string& what) {
    if (!ok) throw FormatError("record " + std::string(id) + ": " + what);
}

}  // namespace

std::string_view to_string(SourceKind v) { return name_of(kSourceKinds, v); }
std::string_view to_string(Origin v) { return name_of(kOrigins, v); }
std::string_view to_string(TopicStage v) { return name_of(kTopicStages, v); }
std::string_view to_string(UnanswerableKind v) { return name_of(kKinds, v); }
std::string_view to_string(RejectReason v) { return name_of(kReasons, v); }
std::string_view to_string(QaStage v) { return name_of(kStages, v); }
std::string_view to_string(ResponseLabel v) { return name_of(kLabels, v); }
std::string_view to_string(CheatTask v) { return name_of(kTasks, v); }

SourceKind parse_source_kind(std::string_view s) { return parse_name(kSourceKinds, s, "source kind"); }
Origin parse_origin(std::string_view s) { return parse_name(kOrigins, s, "origin"); }
TopicStage parse_topic_stage(std::string_view s) { return parse_name(kTopicStages, s, "topic stage"); }
UnanswerableKind parse_unanswerable_kind(std::string_view s) { return parse_name(kKinds, s, "kind"); }
RejectReason parse_reject_reason(std::string_view s) { return parse_name(kReasons, s, "reject reason"); }
ResponseLabel parse_response_label(std::string_view s) { return parse_name(kLabels, s, "label"); }
CheatTask parse_cheat_task(std::string_view s) { return parse_name(kTasks, s, "task"); }

const std::vector<Origin>& external_origins() {
    static const std::vector<Origin> origins{Origin::google_news, Origin::arxiv, Origin::biorxiv,
                                             Origin::chemrxiv, Origin::medrxiv, Origin::pubmed};
    return origins;
}

DocumentRef DocumentRef::make(Origin origin, std::string_view key, std::string title,
                              std::optional<std::string> url,
                              std::optional<std::string> published_at, std::string body) {
    DocumentRef d;
    d.origin = origin;
    d.source_kind = origin == Origin::corpus ? SourceKind::gold : SourceKind::external;
    d.id = assign_id(RecordKind::document, canonical_fields(to_string(origin), key, body));
    d.url = std::move(url);
    d.title = std::move(title);
    d.published_at = std::move(published_at);
    d.body = std::move(body);
    return d;
}

std::string normalize_phrase(std::string_view phrase) {
    std::string out;
    bool gap = false;
    for (unsigned char c : phrase) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            gap = !out.empty();
            continue;
        }
        if (gap) out.push_back(' ');
        gap = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

Topic Topic::make(std::string phrase, std::string origin_request_id,
                  std::optional<std::string> grounding_doc_id) {
    Topic t;
    t.id = assign_id(RecordKind::topic,
                     canonical_fields(origin_request_id, grounding_doc_id.value_or(""),
                                      normalize_phrase(phrase)));
    t.phrase = std::move(phrase);
    t.origin_request_id = std::move(origin_request_id);
    t.stage = grounding_doc_id ? TopicStage::grounded : TopicStage::initial;
    t.grounding_doc_id = std::move(grounding_doc_id);
    return t;
}

ContextGroup ContextGroup::make(std::vector<std::string> chunk_ids, int n_external, int n_gold) {
    ContextGroup g;
    std::sort(chunk_ids.begin(), chunk_ids.end());
    std::string joined;
    for (const auto& c : chunk_ids) {
        joined.append(c);
        joined.push_back('\0');
    }
    g.id = assign_id(RecordKind::context, joined);
    g.chunk_ids = std::move(chunk_ids);
    g.n_external = n_external;
    g.n_gold = n_gold;
    g.kind = n_gold == 0 ? UnanswerableKind::fully_unanswerable
                         : UnanswerableKind::partially_unanswerable;
    return g;
}

std::array<int, 6> QualityScores::as_array() const {
    return {context_necessity,     context_sufficiency,   answer_correctness,
            answer_uniqueness,     corpus_only_necessity, corpus_only_sufficiency};
}

int QualityScores::min_score() const {
    auto a = as_array();
    return *std::min_element(a.begin(), a.end());
}

std::string to_string(const QaStatus& s) {
    std::string out(to_string(s.stage));
    if (s.stage == QaStage::rejected) {
        out += "(";
        out += s.reason ? to_string(*s.reason) : std::string_view("unknown");
        out += ")";
    }
    return out;
}

QaStatus parse_qa_status(std::string_view s) {
    constexpr std::string_view kRejected = "rejected(";
    if (s.substr(0, kRejected.size()) == kRejected && s.size() > kRejected.size() &&
        s.back() == ')') {
        auto inner = s.substr(kRejected.size(), s.size() - kRejected.size() - 1);
        return QaStatus::rejected(parse_reject_reason(inner));
    }
    auto stage = parse_name(kStages, s, "qa status");
    if (stage == QaStage::rejected) throw FormatError("rejected status requires a reason");
    return {stage, std::nullopt};
}

CrumQA CrumQA::make_seed(const ContextGroup& ctx, std::string question, std::string answer,
                         int intended_hop_count) {
    CrumQA qa;
    qa.id = assign_id(RecordKind::qa, canonical_fields(ctx.id, question, answer));
    qa.context_id = ctx.id;
    qa.question = std::move(question);
    qa.answer = std::move(answer);
    qa.kind = ctx.kind;
    qa.intended_hop_count = intended_hop_count;
    qa.status = QaStatus{};
    qa.status_history = {std::string(to_string(QaStage::seed))};
    return qa;
}

void CrumQA::advance(QaStatus next) {
    auto rank = [](QaStage s) { return static_cast<int>(s); };
    bool ok = false;
    if (status.stage == QaStage::rejected || status.stage == QaStage::accepted) {
        ok = false;
    } else if (next.stage == QaStage::rejected) {
        ok = next.reason.has_value();
    } else {
        ok = rank(next.stage) == rank(status.stage) + 1;
    }
    if (!ok) {
        throw PreconditionError("qa " + id + ": illegal status transition " + to_string(status) +
                                " -> " + to_string(next));
    }
    status = next;
    status_history.push_back(to_string(status));
}

std::string record_key(const EvalRecord& r) { return r.config_id + "\x1f" + r.query_id; }
std::string record_key(const ProbeInstance& r) {
    return r.qa_id + "\x1f" + std::to_string(r.part_index);
}
std::string record_key(const CheatabilityReport& r) {
    return r.model_id + "\x1f" + std::string(to_string(r.task));
}

void validate(const DocumentRef& d) {
    check((d.source_kind == SourceKind::gold) == (d.origin == Origin::corpus), d.id,
          "source_kind must be gold exactly when origin is corpus");
}

void validate(const Topic& t) {
    check(!t.phrase.empty(), t.id, "empty phrase");
    check(t.stage != TopicStage::grounded || t.grounding_doc_id.has_value(), t.id,
          "grounded topic without grounding_doc_id");
    if (t.embedding) {
        double n2 = 0.0;
        for (float x : *t.embedding) n2 += static_cast<double>(x) * x;
        check(std::abs(std::sqrt(n2) - 1.0) <= 1e-6, t.id, "embedding is not unit-normalized");
    }
}

void validate(const Chunk& c) {
    check(c.token_count >= 1 && c.token_count <= Chunk::kMaxTokens, c.id,
          "token_count outside [1, 1024]");
    check(c.index_in_doc >= 0, c.id, "negative index_in_doc");
}

void validate(const ContextGroup& g) {
    auto n = g.chunk_ids.size();
    check(n >= ContextGroup::kMinChunks && n <= ContextGroup::kMaxChunks, g.id,
          "context must hold 2-6 chunks");
    check(g.n_external >= 1, g.id, "context needs at least one external chunk");
    check(g.n_gold >= 0 && static_cast<std::size_t>(g.n_external + g.n_gold) == n, g.id,
          "n_external + n_gold must equal the chunk count");
    if (g.kind == UnanswerableKind::fully_unanswerable) {
        check(g.n_gold == 0, g.id, "fully_unanswerable context with gold chunks");
    } else {
        check(g.n_gold >= 1, g.id, "partially_unanswerable context without gold chunks");
    }
}

void validate(const QualityScores& q) {
    for (int s : q.as_array())
        if (s < 0 || s > 2) throw FormatError("quality score outside {0,1,2}");
}

void validate(const CrumQA& qa) {
    if (qa.quality) validate(*qa.quality);
    if (qa.hop_count) check(*qa.hop_count >= 1, qa.id, "hop_count must be >= 1");
    if (qa.status.stage == QaStage::accepted) {
        check(qa.quality.has_value() && qa.quality->min_score() >= 1, qa.id,
              "accepted pair needs six quality scores >= 1");
        check(qa.hop_count.has_value(), qa.id, "accepted pair needs a hop count");
    }
}

void validate(const EvalRecord& r) {
    check(r.accuracy_judged.has_value() == (r.label == ResponseLabel::attempted_answer && !r.error),
          r.query_id, "accuracy_judged must be present exactly for attempted answers");
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const DocumentRef& v) {
    j = json{{"id", v.id},
             {"source_kind", to_string(v.source_kind)},
             {"origin", to_string(v.origin)},
             {"title", v.title},
             {"body", v.body}};
    opt_to_json(j, "url", v.url);
    opt_to_json(j, "published_at", v.published_at);
}

void from_json(const json& j, DocumentRef& v) {
    j.at("id").get_to(v.id);
    v.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
    v.origin = parse_origin(j.at("origin").get<std::string>());
    opt_from_json(j, "url", v.url);
    j.at("title").get_to(v.title);
    opt_from_json(j, "published_at", v.published_at);
    j.at("body").get_to(v.body);
}

void to_json(json& j, const Request& v) {
    j = json{{"id", v.id}, {"text", v.text}, {"gold_doc_ids", v.gold_doc_ids}};
}

void from_json(const json& j, Request& v) {
    j.at("id").get_to(v.id);
    j.at("text").get_to(v.text);
    j.at("gold_doc_ids").get_to(v.gold_doc_ids);
}

void to_json(json& j, const Topic& v) {
    j = json{{"id", v.id},
             {"phrase", v.phrase},
             {"origin_request_id", v.origin_request_id},
             {"stage", to_string(v.stage)}};
    opt_to_json(j, "grounding_doc_id", v.grounding_doc_id);
    opt_to_json(j, "embedding", v.embedding);
}

void from_json(const json& j, Topic& v) {
    j.at("id").get_to(v.id);
    j.at("phrase").get_to(v.phrase);
    j.at("origin_request_id").get_to(v.origin_request_id);
    opt_from_json(j, "grounding_doc_id", v.grounding_doc_id);
    v.stage = parse_topic_stage(j.at("stage").get<std::string>());
    opt_from_json(j, "embedding", v.embedding);
}

void to_json(json& j, const Chunk& v) {
    j = json{{"id", v.id},
             {"doc_id", v.doc_id},
             {"index_in_doc", v.index_in_doc},
             {"token_count", v.token_count},
             {"text", v.text},
             {"source_kind", to_string(v.source_kind)},
             {"topic_id", v.topic_id},
             {"request_id", v.request_id}};
    opt_to_json(j, "relevance_passed", v.relevance_passed);
}

void from_json(const json& j, Chunk& v) {
    j.at("id").get_to(v.id);
    j.at("doc_id").get_to(v.doc_id);
    j.at("index_in_doc").get_to(v.index_in_doc);
    j.at("token_count").get_to(v.token_count);
    j.at("text").get_to(v.text);
    v.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
    j.at("topic_id").get_to(v.topic_id);
    j.at("request_id").get_to(v.request_id);
    opt_from_json(j, "relevance_passed", v.relevance_passed);
}

void to_json(json& j, const ContextGroup& v) {
    j = json{{"id", v.id},
             {"chunk_ids", v.chunk_ids},
             {"n_external", v.n_external},
             {"n_gold", v.n_gold},
             {"kind", to_string(v.kind)}};
}

void from_json(const json& j, ContextGroup& v) {
    j.at("id").get_to(v.id);
    j.at("chunk_ids").get_to(v.chunk_ids);
    j.at("n_external").get_to(v.n_external);
    j.at("n_gold").get_to(v.n_gold);
    v.kind = parse_unanswerable_kind(j.at("kind").get<std::string>());
}

void to_json(json& j, const QualityScores& v) {
    j = json{{"context_necessity", v.context_necessity},
             {"context_sufficiency", v.context_sufficiency},
             {"answer_correctness", v.answer_correctness},
             {"answer_uniqueness", v.answer_uniqueness},
             {"corpus_only_necessity", v.corpus_only_necessity},
             {"corpus_only_sufficiency", v.corpus_only_sufficiency}};
}

void from_json(const json& j, QualityScores& v) {
    j.at("context_necessity").get_to(v.context_necessity);
    j.at("context_sufficiency").get_to(v.context_sufficiency);
    j.at("answer_correctness").get_to(v.answer_correctness);
    j.at("answer_uniqueness").get_to(v.answer_uniqueness);
    j.at("corpus_only_necessity").get_to(v.corpus_only_necessity);
    j.at("corpus_only_sufficiency").get_to(v.corpus_only_sufficiency);
}

void to_json(json& j, const CrumQA& v) {
    j = json{{"id", v.id},
             {"context_id", v.context_id},
             {"question", v.question},
             {"answer", v.answer},
             {"kind", to_string(v.kind)},
             {"status", to_string(v.status)},
             {"intended_hop_count", v.intended_hop_count},
             {"status_history", v.status_history}};
    opt_to_json(j, "cot", v.cot);
    opt_to_json(j, "hop_count", v.hop_count);
    opt_to_json(j, "quality", v.quality);
}

void from_json(const json& j, CrumQA& v) {
    j.at("id").get_to(v.id);
    j.at("context_id").get_to(v.context_id);
    j.at("question").get_to(v.question);
    j.at("answer").get_to(v.answer);
    v.kind = parse_unanswerable_kind(j.at("kind").get<std::string>());
    opt_from_json(j, "cot", v.cot);
    opt_from_json(j, "hop_count", v.hop_count);
    opt_from_json(j, "quality", v.quality);
    v.status = parse_qa_status(j.at("status").get<std::string>());
    v.intended_hop_count = j.value("intended_hop_count", 0);
    v.status_history = j.value("status_history", std::vector<std::string>{});
}

void to_json(json& j, const VerificationResult& v) {
    j = json{{"qa_id", v.qa_id},
             {"retrieved_chunk_ids", v.retrieved_chunk_ids},
             {"judged_unanswerable", v.judged_unanswerable}};
}

void from_json(const json& j, VerificationResult& v) {
    j.at("qa_id").get_to(v.qa_id);
    j.at("retrieved_chunk_ids").get_to(v.retrieved_chunk_ids);
    j.at("judged_unanswerable").get_to(v.judged_unanswerable);
}

void to_json(json& j, const Article& v) {
    to_json(j, v.doc);
    json prov = json::array();
    for (const auto& p : v.provenance)
        prov.push_back(json{{"topic_id", p.topic_id}, {"source", to_string(p.source)}});
    j["provenance"] = std::move(prov);
}

void from_json(const json& j, Article& v) {
    from_json(j, v.doc);
    v.provenance.clear();
    for (const auto& p : j.at("provenance"))
        v.provenance.push_back(
            {p.at("topic_id").get<std::string>(), parse_origin(p.at("source").get<std::string>())});
}

void to_json(json& j, const EvalRecord& v) {
    j = json{{"query_id", v.query_id},
             {"config_id", v.config_id},
             {"response_text", v.response_text},
             {"label", to_string(v.label)},
             {"retrieved_chunk_ids", v.retrieved_chunk_ids}};
    opt_to_json(j, "accuracy_judged", v.accuracy_judged);
    opt_to_json(j, "error", v.error);
}

void from_json(const json& j, EvalRecord& v) {
    j.at("query_id").get_to(v.query_id);
    j.at("config_id").get_to(v.config_id);
    j.at("response_text").get_to(v.response_text);
    v.label = parse_response_label(j.at("label").get<std::string>());
    opt_from_json(j, "accuracy_judged", v.accuracy_judged);
    opt_from_json(j, "error", v.error);
    v.retrieved_chunk_ids = j.value("retrieved_chunk_ids", std::vector<std::string>{});
}

void to_json(json& j, const ProbeInstance& v) {
    j = json{{"qa_id", v.qa_id}, {"part_index", v.part_index}, {"chunk_ids", v.chunk_ids}};
}

void from_json(const json& j, ProbeInstance& v) {
    j.at("qa_id").get_to(v.qa_id);
    j.at("part_index").get_to(v.part_index);
    j.at("chunk_ids").get_to(v.chunk_ids);
}

void to_json(json& j, const CheatabilityReport& v) {
    j = json{{"model_id", v.model_id},
             {"task", to_string(v.task)},
             {"f1_full", v.f1_full},
             {"f1_probe", v.f1_probe},
             {"ratio", v.ratio}};
}

void from_json(const json& j, CheatabilityReport& v) {
    j.at("model_id").get_to(v.model_id);
    v.task = parse_cheat_task(j.at("task").get<std::string>());
    j.at("f1_full").get_to(v.f1_full);
    j.at("f1_probe").get_to(v.f1_probe);
    j.at("ratio").get_to(v.ratio);
}

}  // namespace crumq
