#include "crumq/providers/http.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"

namespace crumq {

namespace {

httplib::Headers to_headers(const std::map<std::string, std::string>& h) {
    httplib::Headers out;
    for (const auto& [k, v] : h) out.emplace(k, v);
    return out;
}

HttpResponse convert(const httplib::Result& res, const std::string& what) {
    if (!res) {
        throw ProviderError(what + ": transport error (" + httplib::to_string(res.error()) + ")",
                            true);
    }
    HttpResponse out;
    out.status = res->status;
    out.body = res->body;
    for (const auto& [k, v] : res->headers) out.headers[k] = v;
    if (out.status == 429 || out.status >= 500) {
        throw ProviderError(what + ": HTTP " + std::to_string(out.status), true);
    }
    if (out.status < 200 || out.status >= 300) {
        throw ProviderError(what + ": HTTP " + std::to_string(out.status) + ": " +
                                out.body.substr(0, 200),
                            false);
    }
    return out;
}

std::unique_ptr<httplib::Client> make_client(const BaseUrl& parts, std::chrono::seconds timeout) {
    auto cli = std::make_unique<httplib::Client>(parts.origin);
    cli->set_connection_timeout(timeout);
    cli->set_read_timeout(timeout);
    cli->set_follow_location(true);
    return cli;
}

std::map<std::string, std::string> auth_headers(const ProviderCredentials& c) {
    std::map<std::string, std::string> h;
    if (!c.api_key.empty()) h["Authorization"] = "Bearer " + c.api_key;
    return h;
}

}  // namespace

BaseUrl split_base_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base url needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

HttpClient::HttpClient(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), parts_(split_base_url(base_url_)), timeout_(timeout) {}

HttpResponse HttpClient::get(const std::string& path_and_query,
                             const std::map<std::string, std::string>& headers) const {
    auto cli = make_client(parts_, timeout_);
    auto target = parts_.path_prefix + path_and_query;
    return convert(cli->Get(target, to_headers(headers)), "GET " + parts_.origin + target);
}

HttpResponse HttpClient::post_json(const std::string& path, const std::string& body,
                                   const std::map<std::string, std::string>& headers) const {
    auto cli = make_client(parts_, timeout_);
    auto target = parts_.path_prefix + path;
    return convert(cli->Post(target, to_headers(headers), body, "application/json"),
                   "POST " + parts_.origin + target);
}

ProviderCredentials credentials_from_env(const std::string& provider_name,
                                         const std::string& default_base_url) {
    std::string upper;
    for (char c : provider_name)
        upper.push_back(std::isalnum(static_cast<unsigned char>(c))
                            ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                            : '_');
    ProviderCredentials out;
    if (const char* k = std::getenv(("CRUMQ_" + upper + "_API_KEY").c_str())) out.api_key = k;
    if (const char* u = std::getenv(("CRUMQ_" + upper + "_BASE_URL").c_str())) out.base_url = u;
    if (out.base_url.empty()) out.base_url = default_base_url;
    if (out.base_url.empty())
        throw ConfigError("no base url for provider '" + provider_name + "'; set CRUMQ_" + upper +
                          "_BASE_URL");
    return out;
}

OpenAICompatibleChat::OpenAICompatibleChat(std::string provider_name, std::string model,
                                           ProviderCredentials creds)
    : provider_(std::move(provider_name)),
      model_(std::move(model)),
      creds_(std::move(creds)),
      http_(creds_.base_url) {}

ChatResult OpenAICompatibleChat::complete(const ChatRequest& request) {
    nlohmann::json body{
        {"model", model_},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.rendered}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_output_tokens},
    };
    auto res = http_.post_json("/chat/completions", body.dump(), auth_headers(creds_));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(res.body);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(identity() + ": malformed response: " + e.what(), true);
    }
    try {
        const auto& choice = j.at("choices").at(0);
        if (choice.value("finish_reason", "") == "content_filter")
            throw RefusalError(identity() + ": response withheld by content filter");
        const auto& msg = choice.at("message");
        if (msg.contains("refusal") && msg["refusal"].is_string())
            throw RefusalError(identity() + ": " + msg["refusal"].get<std::string>());
        ChatResult r;
        r.text = msg.at("content").is_string() ? msg["content"].get<std::string>() : "";
        if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
            r.usage.prompt_tokens = u->value("prompt_tokens", 0);
            r.usage.completion_tokens = u->value("completion_tokens", 0);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(identity() + ": unexpected response shape: " + e.what(), false);
    }
}

OpenAICompatibleEmbedder::OpenAICompatibleEmbedder(std::string provider_name, std::string model,
                                                   ProviderCredentials creds)
    : provider_(std::move(provider_name)),
      model_(std::move(model)),
      creds_(std::move(creds)),
      http_(creds_.base_url) {}

std::vector<Vector> OpenAICompatibleEmbedder::embed(const std::vector<std::string>& texts) {
    nlohmann::json body{{"model", model_}, {"input", texts}};
    auto res = http_.post_json("/embeddings", body.dump(), auth_headers(creds_));
    try {
        auto j = nlohmann::json::parse(res.body);
        std::vector<Vector> out(texts.size());
        for (const auto& item : j.at("data")) {
            auto idx = item.value("index", 0);
            if (idx < 0 || static_cast<std::size_t>(idx) >= out.size())
                throw ProviderError(identity() + ": embedding index out of range", false);
            out[static_cast<std::size_t>(idx)] = item.at("embedding").get<Vector>();
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(identity() + ": unexpected response shape: " + e.what(), false);
    }
}

}  // namespace crumq
