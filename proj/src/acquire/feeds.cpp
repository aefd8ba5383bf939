#include "crumq/acquire/feeds.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <sstream>
#include <thread>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"

namespace crumq::acquire {

namespace pt = boost::property_tree;

std::unique_lock<std::mutex> RateLimiter::acquire() {
    std::unique_lock lock(mu_);
    auto now = std::chrono::steady_clock::now();
    auto next = last_ + min_interval_;
    if (last_.time_since_epoch().count() != 0 && now < next) std::this_thread::sleep_until(next);
    last_ = std::chrono::steady_clock::now();
    return lock;
}

std::string url_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xF]);
        }
    }
    return out;
}

std::string strip_html(std::string_view html) {
    std::string text;
    bool in_tag = false;
    for (char c : html) {
        if (c == '<') {
            in_tag = true;
        } else if (c == '>' && in_tag) {
            in_tag = false;
            text.push_back(' ');
        } else if (!in_tag) {
            text.push_back(c);
        }
    }
    static const std::array<std::pair<std::string_view, std::string_view>, 7> kEntities{{
        {"&nbsp;", " "}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""},
        {"&#39;", "'"}, {"&apos;", "'"}, {"&amp;", "&"},
    }};
    for (const auto& [ent, rep] : kEntities) {
        std::size_t pos = 0;
        while ((pos = text.find(ent, pos)) != std::string::npos) {
            text.replace(pos, ent.size(), rep);
            pos += rep.size();
        }
    }
    std::string collapsed;
    bool space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = !collapsed.empty();
        } else {
            if (space) collapsed.push_back(' ');
            collapsed.push_back(c);
            space = false;
        }
    }
    return collapsed;
}

namespace {

std::optional<int> month_number(std::string_view m) {
    static constexpr std::array<std::string_view, 12> kMonths{
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"};
    if (m.size() < 3) {
        int v = 0;
        for (char c : m) {
            if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
            v = v * 10 + (c - '0');
        }
        if (v >= 1 && v <= 12) return v;
        return std::nullopt;
    }
    std::string lower;
    for (char c : m.substr(0, 3)) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (std::size_t i = 0; i < kMonths.size(); ++i)
        if (kMonths[i] == lower) return static_cast<int>(i + 1);
    return std::nullopt;
}

std::string iso_date(int y, int m, int d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
}

pt::ptree parse_xml(const std::string& xml, const char* what) {
    pt::ptree tree;
    std::istringstream in(xml);
    try {
        pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
    } catch (const pt::xml_parser_error& e) {
        throw ProviderError(std::string(what) + ": malformed XML: " + e.what(), false);
    }
    return tree;
}

nlohmann::json parse_json(const std::string& body, const char* what) {
    try {
        return nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string(what) + ": malformed JSON: " + e.what(), false);
    }
}

std::string one_line(std::string s) {
    for (auto& c : s)
        if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    return strip_html(s);
}

}  // namespace

std::optional<std::string> rfc822_to_iso_date(std::string_view s) {
    // [Day, ]DD Mon YYYY ...
    std::istringstream in{std::string(s)};
    std::vector<std::string> parts;
    std::string w;
    while (in >> w) parts.push_back(w);
    std::size_t i = 0;
    if (!parts.empty() && parts[0].back() == ',') i = 1;
    if (parts.size() < i + 3) return std::nullopt;
    try {
        int day = std::stoi(parts[i]);
        auto month = month_number(parts[i + 1]);
        int year = std::stoi(parts[i + 2]);
        if (!month || day < 1 || day > 31) return std::nullopt;
        return iso_date(year, *month, day);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::vector<RawItem> parse_arxiv_atom(const std::string& xml) {
    auto tree = parse_xml(xml, "arxiv");
    std::vector<RawItem> out;
    auto feed = tree.get_child_optional("feed");
    if (!feed) return out;
    for (const auto& [key, entry] : *feed) {
        if (key != "entry") continue;
        RawItem r;
        r.url = entry.get<std::string>("id", "");
        for (const auto& [lk, link] : entry) {
            if (lk == "link" && link.get<std::string>("<xmlattr>.rel", "") == "alternate")
                r.url = link.get<std::string>("<xmlattr>.href", r.url);
        }
        r.title = one_line(entry.get<std::string>("title", ""));
        r.body = one_line(entry.get<std::string>("summary", ""));
        if (auto p = entry.get_optional<std::string>("published"); p && p->size() >= 10)
            r.published_at = p->substr(0, 10);
        if (!r.url.empty()) out.push_back(std::move(r));
    }
    return out;
}

std::vector<RawItem> parse_news_rss(const std::string& xml) {
    auto tree = parse_xml(xml, "google_news");
    std::vector<RawItem> out;
    auto channel = tree.get_child_optional("rss.channel");
    if (!channel) return out;
    for (const auto& [key, item] : *channel) {
        if (key != "item") continue;
        RawItem r;
        r.url = item.get<std::string>("link", "");
        r.title = one_line(item.get<std::string>("title", ""));
        r.body = strip_html(item.get<std::string>("description", ""));
        if (auto d = item.get_optional<std::string>("pubDate")) r.published_at = rfc822_to_iso_date(*d);
        if (!r.url.empty()) out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::string> parse_pubmed_esearch(const std::string& json) {
    auto j = parse_json(json, "pubmed esearch");
    try {
        return j.at("esearchresult").at("idlist").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("pubmed esearch: unexpected shape: ") + e.what(), false);
    }
}

std::vector<RawItem> parse_pubmed_efetch(const std::string& xml) {
    auto tree = parse_xml(xml, "pubmed efetch");
    std::vector<RawItem> out;
    auto set = tree.get_child_optional("PubmedArticleSet");
    if (!set) return out;
    for (const auto& [key, art] : *set) {
        if (key != "PubmedArticle") continue;
        auto cit = art.get_child_optional("MedlineCitation");
        if (!cit) continue;
        auto pmid = cit->get<std::string>("PMID", "");
        if (pmid.empty()) continue;
        RawItem r;
        r.url = "https://pubmed.ncbi.nlm.nih.gov/" + pmid + "/";
        r.title = one_line(cit->get<std::string>("Article.ArticleTitle", ""));
        std::string abstract;
        if (auto abs = cit->get_child_optional("Article.Abstract")) {
            for (const auto& [ak, part] : *abs) {
                if (ak != "AbstractText") continue;
                if (!abstract.empty()) abstract.push_back(' ');
                abstract += part.get_value<std::string>();
            }
        }
        r.body = one_line(abstract);
        if (auto pd = cit->get_child_optional("Article.Journal.JournalIssue.PubDate")) {
            auto year = pd->get_optional<int>("Year");
            auto month = month_number(pd->get<std::string>("Month", "1"));
            int day = pd->get<int>("Day", 1);
            if (year) r.published_at = iso_date(*year, month.value_or(1), day);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RawItem> parse_europepmc(const std::string& json) {
    auto j = parse_json(json, "europepmc");
    std::vector<RawItem> out;
    try {
        for (const auto& res : j.at("resultList").at("result")) {
            RawItem r;
            if (res.contains("doi") && res["doi"].is_string()) {
                r.url = "https://doi.org/" + res["doi"].get<std::string>();
            } else {
                r.url = "https://europepmc.org/article/" + res.value("source", "PPR") + "/" +
                        res.value("id", "");
            }
            r.title = one_line(res.value("title", ""));
            r.body = strip_html(res.value("abstractText", ""));
            if (res.contains("firstPublicationDate") && res["firstPublicationDate"].is_string())
                r.published_at = res["firstPublicationDate"].get<std::string>();
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("europepmc: unexpected shape: ") + e.what(), false);
    }
    return out;
}

ArxivClient::ArxivClient(std::string base_url, std::chrono::milliseconds min_interval)
    : http_(std::move(base_url)), limiter_(min_interval) {}

std::vector<RawItem> ArxivClient::search(const SourceQuery& q) {
    auto lock = limiter_.acquire();
    auto res = http_.get("/api/query?search_query=" + url_encode("all:\"" + q.query_string + "\"") +
                         "&start=0&max_results=" + std::to_string(q.max_results) +
                         "&sortBy=relevance&sortOrder=descending");
    return parse_arxiv_atom(res.body);
}

GoogleNewsClient::GoogleNewsClient(std::string base_url, std::chrono::milliseconds min_interval)
    : http_(std::move(base_url)), limiter_(min_interval) {}

std::vector<RawItem> GoogleNewsClient::search(const SourceQuery& q) {
    auto lock = limiter_.acquire();
    std::string query = q.query_string;
    if (q.recency_window && q.recency_window->after)
        query += " after:" + q.recency_window->after->substr(0, 10);
    auto res = http_.get("/rss/search?q=" + url_encode(query) + "&hl=en-US&gl=US&ceid=US:en");
    return parse_news_rss(res.body);
}

PubmedClient::PubmedClient(std::string base_url, std::chrono::milliseconds min_interval)
    : http_(std::move(base_url)), limiter_(min_interval) {}

std::vector<RawItem> PubmedClient::search(const SourceQuery& q) {
    std::vector<std::string> ids;
    {
        auto lock = limiter_.acquire();
        auto res = http_.get("/entrez/eutils/esearch.fcgi?db=pubmed&retmode=json&sort=relevance&retmax=" +
                             std::to_string(q.max_results) + "&term=" + url_encode(q.query_string));
        ids = parse_pubmed_esearch(res.body);
    }
    if (ids.empty()) return {};
    std::string joined;
    for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
    std::vector<RawItem> items;
    {
        auto lock = limiter_.acquire();
        auto res = http_.get("/entrez/eutils/efetch.fcgi?db=pubmed&retmode=xml&rettype=abstract&id=" +
                             joined);
        items = parse_pubmed_efetch(res.body);
    }
    // efetch order is not guaranteed; restore esearch relevance order.
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < ids.size(); ++i)
        rank["https://pubmed.ncbi.nlm.nih.gov/" + ids[i] + "/"] = i;
    std::stable_sort(items.begin(), items.end(), [&](const RawItem& a, const RawItem& b) {
        return rank[a.url] < rank[b.url];
    });
    return items;
}

PreprintClient::PreprintClient(Origin server, std::string base_url,
                               std::chrono::milliseconds min_interval)
    : server_(server), http_(std::move(base_url)), limiter_(min_interval) {
    if (server != Origin::biorxiv && server != Origin::medrxiv && server != Origin::chemrxiv)
        throw PreconditionError("PreprintClient serves biorxiv, medrxiv, or chemrxiv only");
}

std::vector<RawItem> PreprintClient::search(const SourceQuery& q) {
    std::string publisher = server_ == Origin::biorxiv   ? "bioRxiv"
                            : server_ == Origin::medrxiv ? "medRxiv"
                                                         : "ChemRxiv";
    std::string query = "(" + q.query_string + ") AND SRC:PPR AND PUBLISHER:\"" + publisher + "\"";
    auto lock = limiter_.acquire();
    auto res = http_.get("/europepmc/webservices/rest/search?format=json&resultType=core&pageSize=" +
                         std::to_string(std::min(q.max_results, 1000)) + "&query=" + url_encode(query));
    return parse_europepmc(res.body);
}

std::unique_ptr<SourceClient> make_live_client(Origin origin, const std::string& base_url) {
    switch (origin) {
        case Origin::arxiv:
            return base_url.empty() ? std::make_unique<ArxivClient>() : std::make_unique<ArxivClient>(base_url);
        case Origin::google_news:
            return base_url.empty() ? std::make_unique<GoogleNewsClient>()
                                    : std::make_unique<GoogleNewsClient>(base_url);
        case Origin::pubmed:
            return base_url.empty() ? std::make_unique<PubmedClient>() : std::make_unique<PubmedClient>(base_url);
        case Origin::biorxiv:
        case Origin::medrxiv:
        case Origin::chemrxiv:
            return base_url.empty() ? std::make_unique<PreprintClient>(origin)
                                    : std::make_unique<PreprintClient>(origin, base_url);
        case Origin::corpus:
            break;
    }
    throw PreconditionError("no live client for origin corpus");
}

}  // namespace crumq::acquire
