#include "crumq/providers/chat.hpp"

#include <cmath>
#include <thread>

#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"

namespace crumq {

void InFlightLimiter::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
}

void InFlightLimiter::release() {
    {
        std::lock_guard lock(mu_);
        ++free_;
    }
    cv_.notify_one();
}

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend,
                       std::shared_ptr<const PromptRegistry> prompts,
                       std::shared_ptr<CallCache> cache, RetryPolicy retry, int max_in_flight)
    : backend_(std::move(backend)),
      prompts_(std::move(prompts)),
      cache_(std::move(cache)),
      retry_(retry),
      limiter_(max_in_flight) {
    if (!backend_) throw PreconditionError("ChatClient needs a backend");
    if (!prompts_) throw PreconditionError("ChatClient needs a prompt registry");
}

std::string ChatClient::call_digest(const ChatCall& call) const {
    const auto& contract = prompts_->at(call.prompt_id);
    nlohmann::json canon{
        {"provider", backend_->identity()},
        {"prompt_id", call.prompt_id},
        {"rendered", prompts_->render(call.prompt_id, call.inputs, call.strict)},
        {"temperature", call.temperature.value_or(contract.temperature)},
        {"max_output_tokens", call.max_output_tokens.value_or(contract.max_output_tokens)},
    };
    return sha256_hex(canon.dump());
}

ChatResult ChatClient::chat(const ChatCall& call) {
    // Contract checks happen before any cache or network activity.
    const auto& contract = prompts_->at(call.prompt_id);
    ChatRequest req{call, prompts_->render(call.prompt_id, call.inputs, call.strict),
                    call.temperature.value_or(contract.temperature),
                    call.max_output_tokens.value_or(contract.max_output_tokens)};
    const auto digest = call_digest(call);

    if (cache_) {
        if (auto hit = cache_->get(digest)) {
            try {
                ChatResult r;
                r.text = hit->at("text").get<std::string>();
                r.usage.prompt_tokens = hit->value("prompt_tokens", 0);
                r.usage.completion_tokens = hit->value("completion_tokens", 0);
                r.usage.cached = true;
                ++cache_hits_;
                return r;
            } catch (const nlohmann::json::exception&) {
                spdlog::warn("cache entry {} has an unexpected shape; re-issuing", digest);
            }
        }
    }

    auto delay = retry_.base_delay;
    for (int attempt = 1;; ++attempt) {
        try {
            limiter_.acquire();
            ++backend_calls_;
            ChatResult r;
            try {
                r = backend_->complete(req);
            } catch (...) {
                limiter_.release();
                throw;
            }
            limiter_.release();
            r.usage.cached = false;
            if (cache_) {
                cache_->put(digest, {{"text", r.text},
                                     {"prompt_tokens", r.usage.prompt_tokens},
                                     {"completion_tokens", r.usage.completion_tokens}});
            }
            return r;
        } catch (const ProviderError& e) {
            if (!e.retryable() || attempt >= retry_.max_attempts) throw;
            spdlog::warn("{}: attempt {} failed ({}); retrying", call.prompt_id, attempt, e.what());
            std::this_thread::sleep_for(delay);
            delay = std::chrono::milliseconds(
                static_cast<long>(std::llround(delay.count() * retry_.multiplier)));
        }
    }
}

}  // namespace crumq
