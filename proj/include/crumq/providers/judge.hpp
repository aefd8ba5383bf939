#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "crumq/providers/chat.hpp"

namespace crumq {

struct QuarantineEntry {
    std::string item_id;
    std::string prompt_id;
    std::vector<std::string> outputs;
    std::string reason;
};

void to_json(nlohmann::json& j, const QuarantineEntry& e);
void from_json(const nlohmann::json& j, QuarantineEntry& e);
/// Orders by item, prompt, then the outputs themselves, so entries sort the
/// same however they were added.
inline std::string record_key(const QuarantineEntry& e) {
    std::string k = e.item_id + "\x1f" + e.prompt_id;
    for (const auto& o : e.outputs) k += "\x1f" + o;
    return k;
}

/// Items whose model output could not be parsed, held for inspection rather
/// than dropped.
class Quarantine {
  public:
    void add(QuarantineEntry e);
    std::vector<QuarantineEntry> entries() const;
    bool contains(std::string_view item_id) const;
    std::size_t size() const;

  private:
    mutable std::mutex mu_;
    std::vector<QuarantineEntry> entries_;
};

// Verdict parsers; nullopt means unparseable.
std::optional<bool> parse_yes_no(std::string_view text);
std::optional<int> parse_likert(std::string_view text);

/// Asks prompt contracts for structured verdicts. An unparseable answer is
/// re-asked once in strict mode; a second failure quarantines the item and
/// returns nullopt.
class Judge {
  public:
    Judge(ChatClient& client, Quarantine& quarantine) : client_(client), quarantine_(quarantine) {}

    std::optional<bool> binary(const std::string& prompt_id, const Slots& inputs,
                               std::string_view item_id);
    std::optional<int> likert(const std::string& prompt_id, const Slots& inputs,
                              std::string_view item_id);

    template <typename T>
    std::optional<T> ask(const std::string& prompt_id, const Slots& inputs,
                         std::string_view item_id,
                         const std::function<std::optional<T>(std::string_view)>& parse) {
        std::vector<std::string> outputs;
        for (bool strict : {false, true}) {
            ChatCall call{prompt_id, inputs, std::nullopt, std::nullopt, strict};
            auto r = client_.chat(call);
            if (auto v = parse(r.text)) return v;
            outputs.push_back(std::move(r.text));
        }
        quarantine_.add({std::string(item_id), prompt_id, std::move(outputs), "unparseable"});
        return std::nullopt;
    }

    ChatClient& client() { return client_; }
    Quarantine& quarantine() { return quarantine_; }

  private:
    void require_grammar(const std::string& prompt_id, OutputGrammar g) const;

    ChatClient& client_;
    Quarantine& quarantine_;
};

}  // namespace crumq
