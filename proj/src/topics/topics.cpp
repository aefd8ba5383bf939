#include "crumq/topics/topics.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"

namespace crumq::topics {

namespace {

std::string clean_phrase(std::string_view raw) {
    auto is_trim = [](char c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '"' || c == '\'' || c == '-' ||
               c == '*' || c == '.' || c == ',';
    };
    std::size_t b = 0, e = raw.size();
    while (b < e && is_trim(raw[b])) ++b;
    while (e > b && is_trim(raw[e - 1])) --e;
    return std::string(raw.substr(b, e - b));
}

}  // namespace

std::vector<std::string> parse_keyphrases(std::string_view text) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == ';' || text[i] == '\n') {
            auto phrase = clean_phrase(text.substr(start, i - start));
            start = i + 1;
            if (phrase.empty()) continue;
            if (seen.insert(normalize_phrase(phrase)).second) out.push_back(std::move(phrase));
        }
    }
    return out;
}

std::vector<Topic> extract_request_keyphrases(ChatClient& generator, const Request& request) {
    if (normalize_phrase(request.text).empty())
        throw PreconditionError("request " + request.id + " has empty text");
    auto r = generator.chat({"extract_keyphrases", {{"request", request.text}}});
    auto phrases = parse_keyphrases(r.text);
    if (phrases.empty()) spdlog::warn("request {}: no keyphrases extracted; skipping", request.id);
    std::vector<Topic> out;
    for (auto& p : phrases) out.push_back(Topic::make(std::move(p), request.id, std::nullopt));
    return out;
}

std::vector<Topic> ground_topics(ChatClient& generator, const Topic& topic,
                                 const DocumentRef& gold_doc, const Request& request) {
    if (topic.stage != TopicStage::initial)
        throw PreconditionError("topic " + topic.id + " is already grounded");
    if (topic.origin_request_id != request.id)
        throw PreconditionError("topic " + topic.id + " does not belong to request " + request.id);
    if (gold_doc.source_kind != SourceKind::gold)
        throw PreconditionError("document " + gold_doc.id + " is not a gold document");
    if (std::find(request.gold_doc_ids.begin(), request.gold_doc_ids.end(), gold_doc.id) ==
        request.gold_doc_ids.end())
        throw PreconditionError("document " + gold_doc.id + " is not in the gold set of request " +
                                request.id);
    auto r = generator.chat(
        {"ground_topic", {{"topic", topic.phrase}, {"request", request.text}, {"document", gold_doc.body}}});
    std::vector<Topic> out;
    for (auto& p : parse_keyphrases(r.text))
        out.push_back(Topic::make(std::move(p), request.id, gold_doc.id));
    return out;
}

void embed_topics(EmbeddingClient& embedder, std::vector<Topic>& topics) {
    if (topics.empty()) return;
    std::vector<std::string> texts;
    texts.reserve(topics.size());
    for (const auto& t : topics) texts.push_back(t.phrase);
    auto vecs = embedder.embed(texts);
    for (std::size_t i = 0; i < topics.size(); ++i) topics[i].embedding = std::move(vecs[i]);
}

std::vector<std::size_t> greedy_keep(std::size_t n,
                                     const std::function<double(std::size_t, std::size_t)>& similarity,
                                     double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw PreconditionError("dedup threshold must lie in (0, 1]");
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i) {
        bool distinct = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) { return similarity(i, k) < threshold; });
        if (distinct) kept.push_back(i);
    }
    return kept;
}

std::vector<Topic> deduplicate_topics(std::vector<Topic> topics, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw PreconditionError("dedup threshold must lie in (0, 1]");
    for (const auto& t : topics)
        if (!t.embedding) throw PreconditionError("topic " + t.id + " has no embedding");
    std::sort(topics.begin(), topics.end(),
              [](const Topic& a, const Topic& b) { return a.id < b.id; });
    topics.erase(std::unique(topics.begin(), topics.end(),
                             [](const Topic& a, const Topic& b) { return a.id == b.id; }),
                 topics.end());
    auto keep = greedy_keep(
        topics.size(), [&](std::size_t i, std::size_t k) { return dot(*topics[i].embedding, *topics[k].embedding); },
        threshold);
    std::vector<Topic> kept;
    for (auto i : keep) kept.push_back(std::move(topics[i]));
    return kept;
}

}  // namespace crumq::topics
