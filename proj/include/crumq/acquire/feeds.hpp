#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crumq/acquire/source.hpp"
#include "crumq/providers/http.hpp"

namespace crumq::acquire {

/// Spaces successive requests to one service by at least `min_interval`.
class RateLimiter {
  public:
    explicit RateLimiter(std::chrono::milliseconds min_interval) : min_interval_(min_interval) {}
    /// Blocks until the next request may go out, then holds the slot.
    std::unique_lock<std::mutex> acquire();

  private:
    std::mutex mu_;
    std::chrono::milliseconds min_interval_;
    std::chrono::steady_clock::time_point last_{};
};

std::string url_encode(std::string_view s);
/// Strips markup tags and decodes the common character entities.
std::string strip_html(std::string_view html);
/// "Mon, 06 Oct 2025 07:00:00 GMT" -> "2025-10-06".
std::optional<std::string> rfc822_to_iso_date(std::string_view s);

// Response parsers, exposed for testing against recorded payloads.
std::vector<RawItem> parse_arxiv_atom(const std::string& xml);
std::vector<RawItem> parse_news_rss(const std::string& xml);
std::vector<std::string> parse_pubmed_esearch(const std::string& json);
std::vector<RawItem> parse_pubmed_efetch(const std::string& xml);
std::vector<RawItem> parse_europepmc(const std::string& json);

/// arXiv Atom query API.
class ArxivClient final : public SourceClient {
  public:
    explicit ArxivClient(std::string base_url = "https://export.arxiv.org",
                         std::chrono::milliseconds min_interval = std::chrono::milliseconds(3000));
    Origin origin() const override { return Origin::arxiv; }
    std::vector<RawItem> search(const SourceQuery& q) override;

  private:
    HttpClient http_;
    RateLimiter limiter_;
};

/// Google News RSS search.
class GoogleNewsClient final : public SourceClient {
  public:
    explicit GoogleNewsClient(std::string base_url = "https://news.google.com",
                              std::chrono::milliseconds min_interval = std::chrono::milliseconds(1000));
    Origin origin() const override { return Origin::google_news; }
    std::vector<RawItem> search(const SourceQuery& q) override;

  private:
    HttpClient http_;
    RateLimiter limiter_;
};

/// NCBI E-utilities: esearch for ids (relevance order), efetch for abstracts.
class PubmedClient final : public SourceClient {
  public:
    explicit PubmedClient(std::string base_url = "https://eutils.ncbi.nlm.nih.gov",
                          std::chrono::milliseconds min_interval = std::chrono::milliseconds(400));
    Origin origin() const override { return Origin::pubmed; }
    std::vector<RawItem> search(const SourceQuery& q) override;

  private:
    HttpClient http_;
    RateLimiter limiter_;
};

/// bioRxiv, medRxiv, and ChemRxiv preprints through the Europe PMC search
/// API, filtered by publisher.
class PreprintClient final : public SourceClient {
  public:
    PreprintClient(Origin server, std::string base_url = "https://www.ebi.ac.uk",
                   std::chrono::milliseconds min_interval = std::chrono::milliseconds(200));
    Origin origin() const override { return server_; }
    std::vector<RawItem> search(const SourceQuery& q) override;

  private:
    Origin server_;
    HttpClient http_;
    RateLimiter limiter_;
};

/// Live client for an external origin. An empty base_url selects the public
/// service.
std::unique_ptr<SourceClient> make_live_client(Origin origin, const std::string& base_url = "");

}  // namespace crumq::acquire
