#include <algorithm>
#include <cctype>
#include <set>

#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"
#include "crumq/harness/harness.hpp"
#include "crumq/text/passages.hpp"

namespace crumq::harness {

RetrievalMode parse_retrieval_mode(std::string_view s) {
    if (s == "vector") return RetrievalMode::vector;
    if (s == "ensemble") return RetrievalMode::ensemble;
    throw ConfigError("unknown retrieval mode '" + std::string(s) + "'");
}

Rewriting parse_rewriting(std::string_view s) {
    if (s == "none") return Rewriting::none;
    if (s == "hyde") return Rewriting::hyde;
    throw ConfigError("unknown rewriting mode '" + std::string(s) + "'");
}

std::string_view to_string(RetrievalMode m) { return m == RetrievalMode::vector ? "vector" : "ensemble"; }
std::string_view to_string(Rewriting r) { return r == Rewriting::none ? "none" : "hyde"; }

void check_config(const RagConfig& config, const RagSystem& system) {
    if (config.top_k < 1) throw ConfigError("rag config " + config.id + ": top_k must be >= 1");
    if (!system.generator || !system.embedder || !system.index || !system.chunk_texts)
        throw ConfigError("rag config " + config.id + ": generator, embedder, and index are required");
    if (config.retrieval == RetrievalMode::ensemble && !system.lexical)
        throw ConfigError("rag config " + config.id + ": ensemble retrieval needs a lexical index");
    if (config.reranker && !system.reranker)
        throw ConfigError("rag config " + config.id + ": reranker '" + *config.reranker +
                          "' is not registered");
}

RagTrace run_rag(const RagConfig& config, RagSystem& system, const std::string& query) {
    check_config(config, system);
    RagTrace trace;
    try {
        trace.search_text = config.rewriting == Rewriting::hyde
                                ? retrieval::hyde_rewrite(*system.generator, query)
                                : query;
        std::vector<retrieval::Hit> hits;
        if (config.retrieval == RetrievalMode::vector) {
            hits = retrieval::search_topk(*system.index, *system.embedder, trace.search_text, config.top_k);
        } else {
            auto dense = retrieval::search_topk(*system.index, *system.embedder, trace.search_text,
                                                std::max(config.top_k, retrieval::kCandidateDepth));
            // The lexical side always sees the user's words.
            auto sparse = system.lexical->search(query, std::max(config.top_k, retrieval::kCandidateDepth));
            hits = retrieval::rrf_fuse({dense, sparse}, config.top_k);
        }
        if (system.reranker) {
            std::set<std::string> before;
            for (const auto& h : hits) before.insert(h.chunk_id);
            hits = system.reranker->rerank(query, std::move(hits), *system.chunk_texts);
            for (const auto& h : hits)
                if (!before.count(h.chunk_id))
                    throw PreconditionError("reranker " + system.reranker->id() + " added candidate " + h.chunk_id);
        }
        std::vector<std::string_view> texts;
        for (const auto& h : hits) {
            trace.retrieved_chunk_ids.push_back(h.chunk_id);
            texts.push_back(system.chunk_texts->at(h.chunk_id));
        }
        auto r = system.generator->chat({"rag_answer", {{"query", query}, {"context", label_passages(texts).text}}});
        trace.response = std::move(r.text);
    } catch (const ProviderError& e) {
        spdlog::warn("rag {}: provider failure: {}", config.id, e.what());
        trace.error = e.what();
    }
    return trace;
}

std::optional<ResponseLabel> parse_response_label(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    std::string w;
    while (i < text.size() && (std::isalpha(static_cast<unsigned char>(text[i])) || text[i] == '_' ||
                               text[i] == '-' || text[i] == ' ')) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i++])));
        w.push_back(c == '-' || c == ' ' ? '_' : c);
    }
    while (!w.empty() && w.back() == '_') w.pop_back();
    if (w == "label" || w == "category") {
        auto colon = text.find(':');
        return colon == std::string_view::npos ? std::nullopt : parse_response_label(text.substr(colon + 1));
    }
    if (w == "attempted_answer" || w == "attempted") return ResponseLabel::attempted_answer;
    if (w == "refusal" || w == "refused") return ResponseLabel::refusal;
    if (w == "clarification_request" || w == "clarification") return ResponseLabel::clarification_request;
    return std::nullopt;
}

std::optional<ResponseLabel> classify_response(Judge& judge, const std::string& response,
                                               std::string_view item_id) {
    return judge.ask<ResponseLabel>("classify_response", {{"response", response}}, item_id,
                                    parse_response_label);
}

std::optional<bool> judge_accuracy(Judge& judge, const std::string& question,
                                   const std::string& predicted, const std::string& target,
                                   std::string_view item_id) {
    return judge.binary("answer_equivalence",
                        {{"question", question}, {"predicted", predicted}, {"target", target}}, item_id);
}

std::optional<EvalRecord> evaluate_query(const RagConfig& config, RagSystem& system, Judge& judge,
                                         const CrumQA& qa) {
    EvalRecord rec;
    rec.query_id = qa.id;
    rec.config_id = config.id;
    auto trace = run_rag(config, system, qa.question);
    rec.retrieved_chunk_ids = trace.retrieved_chunk_ids;
    if (trace.error) {
        rec.error = trace.error;
        rec.label = ResponseLabel::refusal;
        return rec;
    }
    rec.response_text = trace.response;
    const std::string item = config.id + ":" + qa.id;
    auto label = classify_response(judge, rec.response_text, item);
    if (!label) return std::nullopt;
    rec.label = *label;
    if (rec.label == ResponseLabel::attempted_answer) {
        auto acc = judge_accuracy(judge, qa.question, rec.response_text, qa.answer, item);
        if (!acc) return std::nullopt;
        rec.accuracy_judged = *acc;
    }
    return rec;
}

}  // namespace crumq::harness
