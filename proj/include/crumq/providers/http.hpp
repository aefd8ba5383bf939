#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>

#include "crumq/providers/chat.hpp"
#include "crumq/providers/embed.hpp"

namespace crumq {

/// "https://api.example.com:8443/v1" -> {"https://api.example.com:8443", "/v1"}.
struct BaseUrl {
    std::string origin;
    std::string path_prefix;
};
BaseUrl split_base_url(const std::string& url);

struct HttpResponse {
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;
};

/// Thin blocking HTTP helper. Transport failures and 429/5xx become
/// retryable ProviderErrors; other non-2xx statuses are non-retryable.
class HttpClient {
  public:
    explicit HttpClient(std::string base_url,
                        std::chrono::seconds timeout = std::chrono::seconds(60));

    HttpResponse get(const std::string& path_and_query,
                     const std::map<std::string, std::string>& headers = {}) const;
    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::map<std::string, std::string>& headers = {}) const;

    const std::string& base_url() const { return base_url_; }

  private:
    std::string base_url_;
    BaseUrl parts_;
    std::chrono::seconds timeout_;
};

/// Credentials for provider `name`, read from CRUMQ_<NAME>_API_KEY and
/// CRUMQ_<NAME>_BASE_URL.
struct ProviderCredentials {
    std::string api_key;
    std::string base_url;
};
ProviderCredentials credentials_from_env(const std::string& provider_name,
                                         const std::string& default_base_url = "");

/// Chat backend for any OpenAI-compatible /chat/completions endpoint.
class OpenAICompatibleChat final : public ChatBackend {
  public:
    OpenAICompatibleChat(std::string provider_name, std::string model, ProviderCredentials creds);

    std::string identity() const override { return provider_ + "/" + model_; }
    ChatResult complete(const ChatRequest& request) override;

  private:
    std::string provider_;
    std::string model_;
    ProviderCredentials creds_;
    HttpClient http_;
};

/// Embedder for any OpenAI-compatible /embeddings endpoint.
class OpenAICompatibleEmbedder final : public Embedder {
  public:
    OpenAICompatibleEmbedder(std::string provider_name, std::string model,
                             ProviderCredentials creds);

    std::string identity() const override { return provider_ + "/" + model_; }
    std::vector<Vector> embed(const std::vector<std::string>& texts) override;

  private:
    std::string provider_;
    std::string model_;
    ProviderCredentials creds_;
    HttpClient http_;
};

}  // namespace crumq
