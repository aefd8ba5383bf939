#include "crumq/acquire/source.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/core/jsonl.hpp"

namespace crumq::acquire {

bool DateRange::contains(const std::string& date) const {
    auto day = date.substr(0, 10);
    if (after && day < after->substr(0, 10)) return false;
    if (before && day > before->substr(0, 10)) return false;
    return true;
}

FetchOutcome fetch_related_articles(SourceClient& client, const SourceQuery& q,
                                    const RetryPolicy& retry) {
    if (q.max_results < 1) throw PreconditionError("max_results must be >= 1");
    FetchOutcome out;
    const std::string tag = std::string(to_string(q.source)) + " '" + q.query_string + "'";
    std::vector<RawItem> items;
    auto delay = retry.base_delay;
    for (int attempt = 1;; ++attempt) {
        try {
            items = client.search(q);
            break;
        } catch (const ProviderError& e) {
            if (e.retryable() && attempt < retry.max_attempts) {
                spdlog::warn("{}: {} (attempt {}); backing off", tag, e.what(), attempt);
                std::this_thread::sleep_for(delay);
                delay = std::chrono::milliseconds(
                    static_cast<long>(std::llround(delay.count() * retry.multiplier)));
                continue;
            }
            out.partial = true;
            out.warnings.push_back(tag + ": source failed: " + e.what());
            return out;
        }
    }

    std::size_t undated = 0, outside = 0;
    std::set<std::string> seen;
    for (auto& it : items) {
        if (q.recency_window) {
            if (!it.published_at) {
                ++undated;
                continue;
            }
            if (!q.recency_window->contains(*it.published_at)) {
                ++outside;
                continue;
            }
        }
        if (!seen.insert(it.url).second) continue;
        if (static_cast<int>(out.docs.size()) >= q.max_results) break;
        out.docs.push_back(DocumentRef::make(q.source, it.url, std::move(it.title), it.url,
                                             std::move(it.published_at), std::move(it.body)));
    }
    if (!items.empty() && out.docs.empty() && q.recency_window) {
        out.warnings.push_back(tag + ": recency window excluded all " +
                               std::to_string(items.size()) + " items");
    } else if (undated + outside > 0) {
        spdlog::debug("{}: {} undated and {} out-of-window items dropped", tag, undated, outside);
    }
    return out;
}

std::string query_digest(const std::string& query_string) {
    return sha256_hex(query_string).substr(0, 32);
}

FixtureSource::FixtureSource(std::filesystem::path dir, Origin origin)
    : dir_(std::move(dir)), origin_(origin) {}

std::filesystem::path FixtureSource::fixture_path(const std::filesystem::path& dir, Origin origin,
                                                  const std::string& query_string) {
    return dir / std::string(to_string(origin)) / (query_digest(query_string) + ".json");
}

std::vector<RawItem> FixtureSource::search(const SourceQuery& q) {
    auto path = fixture_path(dir_, origin_, q.query_string);
    if (!std::filesystem::exists(path)) return {};
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(path.string() + ": malformed fixture: " + e.what(), false);
    }
    if (int fail_times = j.value("fail_times", 0); fail_times > 0) {
        std::lock_guard lock(mu_);
        int& served = failures_served_[path.string()];
        if (served < fail_times) {
            ++served;
            throw ProviderError("rate limited (fixture)", true);
        }
    }
    if (j.value("status", "ok") != "ok")
        throw ProviderError("fixture reports status " + j.value("status", ""), false);
    std::vector<RawItem> out;
    for (const auto& it : j.value("items", nlohmann::json::array())) {
        RawItem r;
        r.url = it.at("url").get<std::string>();
        r.title = it.value("title", "");
        if (auto p = it.find("published_at"); p != it.end() && p->is_string())
            r.published_at = p->get<std::string>();
        r.body = it.value("body", "");
        out.push_back(std::move(r));
    }
    return out;
}

void ArticleStore::insert(const DocumentRef& doc, const Provenance& prov) {
    const std::string key = doc.url.value_or(doc.id);
    std::lock_guard lock(mu_);
    auto it = by_url_.find(key);
    if (it == by_url_.end()) {
        by_url_.emplace(key, Entry{doc, prov, {prov}});
        return;
    }
    it->second.provenance.insert(prov);
    if (prov < it->second.representative) {
        it->second.representative = prov;
        it->second.doc = doc;
    }
}

std::vector<Article> ArticleStore::articles() const {
    std::lock_guard lock(mu_);
    std::vector<Article> out;
    out.reserve(by_url_.size());
    for (const auto& [_, e] : by_url_)
        out.push_back({e.doc, std::vector<Provenance>(e.provenance.begin(), e.provenance.end())});
    std::sort(out.begin(), out.end(),
              [](const Article& a, const Article& b) { return a.doc.id < b.doc.id; });
    return out;
}

std::size_t ArticleStore::size() const {
    std::lock_guard lock(mu_);
    return by_url_.size();
}

std::vector<Article> aggregate_external_corpus(const std::vector<TaggedResult>& results) {
    ArticleStore store;
    for (const auto& r : results)
        for (const auto& d : r.docs) store.insert(d, {r.topic_id, r.source});
    return store.articles();
}

BudgetMode parse_budget_mode(std::string_view s) {
    if (s == "per_source") return BudgetMode::per_source;
    if (s == "per_topic") return BudgetMode::per_topic;
    throw ConfigError("unknown budget mode '" + std::string(s) + "'");
}

std::vector<TaggedResult> apply_topic_budget(const std::vector<TaggedResult>& per_source,
                                             int max_results) {
    std::map<std::string, std::vector<const TaggedResult*>> by_topic;
    for (const auto& r : per_source) by_topic[r.topic_id].push_back(&r);
    std::vector<TaggedResult> out;
    for (auto& [topic, lists] : by_topic) {
        std::sort(lists.begin(), lists.end(),
                  [](const TaggedResult* a, const TaggedResult* b) { return a->source < b->source; });
        std::map<Origin, TaggedResult> kept;
        std::set<std::string> seen;
        int total = 0;
        for (std::size_t rank = 0; total < max_results; ++rank) {
            bool any = false;
            for (const auto* l : lists) {
                if (rank >= l->docs.size()) continue;
                any = true;
                const auto& d = l->docs[rank];
                if (!seen.insert(d.url.value_or(d.id)).second) continue;
                auto& slot = kept[l->source];
                slot.topic_id = topic;
                slot.source = l->source;
                slot.docs.push_back(d);
                if (++total >= max_results) break;
            }
            if (!any) break;
        }
        for (auto& [_, r] : kept) out.push_back(std::move(r));
    }
    return out;
}

}  // namespace crumq::acquire
