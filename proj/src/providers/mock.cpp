#include "crumq/providers/mock.hpp"

#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/core/jsonl.hpp"

namespace crumq {

namespace {

std::string substitute(const std::string& response, const Slots& inputs) {
    std::string out;
    std::size_t pos = 0;
    while (pos < response.size()) {
        auto open = response.find("{{", pos);
        if (open == std::string::npos) break;
        auto close = response.find("}}", open + 2);
        if (close == std::string::npos) break;
        out.append(response, pos, open - pos);
        auto it = inputs.find(response.substr(open + 2, close - open - 2));
        if (it != inputs.end()) {
            out += it->second;
        } else {
            out.append(response, open, close + 2 - open);
        }
        pos = close + 2;
    }
    out.append(response, pos, std::string::npos);
    return out;
}

}  // namespace

std::string mock_input_digest(const Slots& inputs) {
    nlohmann::json j(inputs);
    return sha256_hex(j.dump()).substr(0, 32);
}

MockChatBackend::MockChatBackend(std::string name) : name_(std::move(name)) {}

std::shared_ptr<MockChatBackend> MockChatBackend::from_file(const std::filesystem::path& path,
                                                            std::string name) {
    auto m = std::make_shared<MockChatBackend>(std::move(name));
    try {
        m->load_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return m;
}

void MockChatBackend::load_json(const nlohmann::json& j) {
    if (auto it = j.find("rules"); it != j.end()) {
        for (const auto& r : *it) {
            MockRule rule;
            rule.prompt_id = r.at("prompt_id").get<std::string>();
            if (auto w = r.find("when"); w != r.end()) {
                for (const auto& [slot, cond] : w->items())
                    rule.when.push_back({slot, cond.at("contains").get<std::string>()});
            }
            if (auto s = r.find("strict"); s != r.end()) rule.strict = s->get<bool>();
            rule.response = r.value("response", "");
            rule.refuse = r.value("refuse", false);
            rules_.push_back(std::move(rule));
        }
    }
    if (auto it = j.find("exact"); it != j.end())
        for (const auto& [key, text] : it->items()) exact_[key] = text.get<std::string>();
    if (auto it = j.find("defaults"); it != j.end())
        for (const auto& [key, text] : it->items()) defaults_[key] = text.get<std::string>();
}

std::string MockChatBackend::exact_key(const ChatCall& call) {
    return call.prompt_id + (call.strict ? ":strict:" : ":") + mock_input_digest(call.inputs);
}

void MockChatBackend::add_exact(const std::string& prompt_id, const Slots& inputs,
                                std::string response) {
    exact_[exact_key(ChatCall{prompt_id, inputs})] = std::move(response);
}

std::map<std::string, std::string> MockChatBackend::recorded() const {
    std::lock_guard lock(log_mu_);
    return recorded_;
}

std::vector<std::string> MockChatBackend::call_log() const {
    std::lock_guard lock(log_mu_);
    return log_;
}

ChatResult MockChatBackend::complete(const ChatRequest& request) {
    const auto& call = request.call;
    ++calls_;
    {
        std::lock_guard lock(log_mu_);
        log_.push_back(call.prompt_id);
    }
    if (fail_next_.load() > 0) {
        --fail_next_;
        throw ProviderError("mock: injected failure", fail_retryable_);
    }

    auto respond = [&](std::string text) {
        if (recording_) {
            std::lock_guard lock(log_mu_);
            recorded_[exact_key(call)] = text;
        }
        ChatResult r;
        r.usage.prompt_tokens = static_cast<int>(request.rendered.size() / 4);
        r.usage.completion_tokens = static_cast<int>(text.size() / 4);
        r.text = std::move(text);
        return r;
    };

    if (script_) {
        if (auto s = script_(call)) return respond(*s);
    }
    if (auto it = exact_.find(exact_key(call)); it != exact_.end())
        return respond(it->second);
    for (const auto& rule : rules_) {
        if (rule.prompt_id != call.prompt_id) continue;
        if (rule.strict && *rule.strict != call.strict) continue;
        bool ok = true;
        for (const auto& c : rule.when) {
            auto it = call.inputs.find(c.slot);
            if (it == call.inputs.end() || it->second.find(c.contains) == std::string::npos) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        if (rule.refuse) throw RefusalError("mock: scripted refusal for " + call.prompt_id);
        return respond(substitute(rule.response, call.inputs));
    }
    if (auto it = defaults_.find(call.prompt_id); it != defaults_.end())
        return respond(substitute(it->second, call.inputs));
    throw ProviderError("mock '" + name_ + "' has no fixture for prompt '" + call.prompt_id +
                            "' (input digest " + mock_input_digest(call.inputs) + ")",
                        false);
}

}  // namespace crumq
