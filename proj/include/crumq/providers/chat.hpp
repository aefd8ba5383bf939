#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "crumq/providers/cache.hpp"
#include "crumq/providers/prompts.hpp"

namespace crumq {

struct ChatCall {
    std::string prompt_id;
    Slots inputs;
    /// Unset: use the contract default.
    std::optional<double> temperature;
    std::optional<int> max_output_tokens;
    /// Re-ask with the contract's strict suffix appended.
    bool strict = false;
};

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
    bool cached = false;
};

struct ChatResult {
    std::string text;
    Usage usage;
};

/// Fully resolved request handed to a backend.
struct ChatRequest {
    const ChatCall& call;
    std::string rendered;
    double temperature = 0.0;
    int max_output_tokens = 512;
};

class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    /// Stable provider+model identity; part of every cache key.
    virtual std::string identity() const = 0;
    /// Throws ProviderError (retryable or not) or RefusalError on failure.
    virtual ChatResult complete(const ChatRequest& request) = 0;
};

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds base_delay{200};
    double multiplier = 2.0;
};

/// Semaphore bounding concurrent provider calls.
class InFlightLimiter {
  public:
    explicit InFlightLimiter(int max_in_flight) : free_(max_in_flight < 1 ? 1 : max_in_flight) {}
    void acquire();
    void release();

  private:
    std::mutex mu_;
    std::condition_variable cv_;
    int free_;
};

/// Front end for chat completions: validates the prompt contract, consults the
/// cache, retries transient failures with exponential backoff, and bounds the
/// number of calls in flight.
class ChatClient {
  public:
    ChatClient(std::shared_ptr<ChatBackend> backend, std::shared_ptr<const PromptRegistry> prompts,
               std::shared_ptr<CallCache> cache = nullptr, RetryPolicy retry = {},
               int max_in_flight = 8);

    ChatResult chat(const ChatCall& call);

    const PromptRegistry& prompts() const { return *prompts_; }
    std::string identity() const { return backend_->identity(); }
    /// Calls that reached the backend (cache hits excluded).
    long backend_calls() const { return backend_calls_.load(); }
    long cache_hits() const { return cache_hits_.load(); }

    /// Cache key for `call` against this backend.
    std::string call_digest(const ChatCall& call) const;

  private:
    std::shared_ptr<ChatBackend> backend_;
    std::shared_ptr<const PromptRegistry> prompts_;
    std::shared_ptr<CallCache> cache_;
    RetryPolicy retry_;
    InFlightLimiter limiter_;
    std::atomic<long> backend_calls_{0};
    std::atomic<long> cache_hits_{0};
};

}  // namespace crumq
