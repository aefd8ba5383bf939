#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crumq/core/types.hpp"
#include "crumq/providers/chat.hpp"

namespace crumq::acquire {

inline constexpr int kDefaultMaxResults = 200;

/// Inclusive bounds on an article's publication date. Dates compare on their
/// ISO-8601 `YYYY-MM-DD` prefix.
struct DateRange {
    std::optional<std::string> after;
    std::optional<std::string> before;

    bool contains(const std::string& date) const;
};

struct SourceQuery {
    std::string topic_id;
    Origin source = Origin::arxiv;
    std::string query_string;
    int max_results = kDefaultMaxResults;
    std::optional<DateRange> recency_window;
};

/// One search hit as a feed returns it, before filtering.
struct RawItem {
    std::string url;
    std::string title;
    std::optional<std::string> published_at;
    std::string body;
};

/// A feed that answers keyword searches with hits in its own relevance order.
/// Rate limits surface as retryable ProviderErrors.
class SourceClient {
  public:
    virtual ~SourceClient() = default;
    virtual Origin origin() const = 0;
    virtual std::vector<RawItem> search(const SourceQuery& q) = 0;
};

struct FetchOutcome {
    std::vector<DocumentRef> docs;
    std::vector<std::string> warnings;
    /// Set when the source failed and returned nothing usable.
    bool partial = false;
};

/// Searches one source: retries rate limits with backoff, drops hits outside
/// the recency window, removes duplicate urls, and keeps the first
/// `max_results` in the source's ranking. A hard failure yields an empty,
/// `partial` outcome instead of an exception.
FetchOutcome fetch_related_articles(SourceClient& client, const SourceQuery& q,
                                    const RetryPolicy& retry = {});

/// Digest naming a recorded response file for a query string.
std::string query_digest(const std::string& query_string);

/// Replays recorded responses from `<dir>/<source>/<query digest>.json`:
/// {"query": ..., "items": [{"url", "title", "published_at", "body"}],
///  "status": "ok" | "error", "fail_times": n}. `fail_times` makes the first n
/// lookups of that file fail as rate limited. A missing file is an empty feed.
class FixtureSource final : public SourceClient {
  public:
    FixtureSource(std::filesystem::path dir, Origin origin);

    Origin origin() const override { return origin_; }
    std::vector<RawItem> search(const SourceQuery& q) override;

    static std::filesystem::path fixture_path(const std::filesystem::path& dir, Origin origin,
                                              const std::string& query_string);

  private:
    std::filesystem::path dir_;
    Origin origin_;
    std::mutex mu_;
    std::map<std::string, int> failures_served_;
};

/// Global url-deduplicated store of external articles. Safe for concurrent
/// inserts; the stored copy of an article is the one seen under its smallest
/// (topic_id, source) provenance, so the result does not depend on insert
/// order.
class ArticleStore {
  public:
    void insert(const DocumentRef& doc, const Provenance& prov);
    std::vector<Article> articles() const;
    std::size_t size() const;

  private:
    struct Entry {
        DocumentRef doc;
        Provenance representative;
        std::set<Provenance> provenance;
    };
    mutable std::mutex mu_;
    std::map<std::string, Entry> by_url_;
};

struct TaggedResult {
    std::string topic_id;
    Origin source = Origin::arxiv;
    std::vector<DocumentRef> docs;
};

std::vector<Article> aggregate_external_corpus(const std::vector<TaggedResult>& results);

/// How N_e is applied: to each (topic, source) pair, or to a topic's merged
/// results across sources.
enum class BudgetMode { per_source, per_topic };
BudgetMode parse_budget_mode(std::string_view s);

/// Round-robin merge of ranked per-source lists with url dedup, truncated to
/// `max_results` (per-topic budget mode).
std::vector<TaggedResult> apply_topic_budget(const std::vector<TaggedResult>& per_source,
                                             int max_results);

}  // namespace crumq::acquire
