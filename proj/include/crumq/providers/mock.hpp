#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crumq/providers/chat.hpp"

namespace crumq {

/// Digest of a call's input slots; the key of exact mock fixtures.
std::string mock_input_digest(const Slots& inputs);

struct MockCondition {
    std::string slot;
    std::string contains;
};

/// Responds with `response` when every condition holds. `{{slot}}` in the
/// response is replaced with that input slot's value.
struct MockRule {
    std::string prompt_id;
    std::vector<MockCondition> when;
    std::optional<bool> strict;
    std::string response;
    bool refuse = false;
};

/// Scripted chat backend for offline runs. Lookup order: script callback,
/// exact (prompt_id, input digest) fixtures, rules in order, per-prompt
/// defaults. A call nothing matches raises a non-retryable ProviderError.
class MockChatBackend final : public ChatBackend {
  public:
    using Script = std::function<std::optional<std::string>(const ChatCall&)>;

    explicit MockChatBackend(std::string name = "mock");

    /// Loads {"rules": [...], "exact": {...}, "defaults": {...}}.
    static std::shared_ptr<MockChatBackend> from_file(const std::filesystem::path& path,
                                                      std::string name = "mock");
    void load_json(const nlohmann::json& j);

    std::string identity() const override { return "mock/" + name_; }
    ChatResult complete(const ChatRequest& request) override;

    void set_script(Script s) { script_ = std::move(s); }
    void add_rule(MockRule rule) { rules_.push_back(std::move(rule)); }
    void set_default(const std::string& prompt_id, std::string response) {
        defaults_[prompt_id] = std::move(response);
    }
    void add_exact(const std::string& prompt_id, const Slots& inputs, std::string response);
    /// The next `n` calls fail with a ProviderError of the given retryability.
    void fail_next(int n, bool retryable = true) {
        fail_next_ = n;
        fail_retryable_ = retryable;
    }

    long calls() const { return calls_.load(); }
    /// Prompt ids seen so far, in call order.
    std::vector<std::string> call_log() const;

    /// While recording, every answered call is remembered under its exact key.
    void set_recording(bool on) { recording_ = on; }
    /// Recorded responses as an "exact" fixture table.
    std::map<std::string, std::string> recorded() const;
    /// Exact-table key: prompt id, strictness, and input digest.
    static std::string exact_key(const ChatCall& call);

  private:
    std::string name_;
    Script script_;
    std::map<std::string, std::string> exact_;
    std::vector<MockRule> rules_;
    std::map<std::string, std::string> defaults_;
    std::atomic<int> fail_next_{0};
    bool fail_retryable_ = true;
    std::atomic<long> calls_{0};
    mutable std::mutex log_mu_;
    std::vector<std::string> log_;
    std::atomic<bool> recording_{false};
    std::map<std::string, std::string> recorded_;
};

}  // namespace crumq
