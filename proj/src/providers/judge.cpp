#include "crumq/providers/judge.hpp"

#include <cctype>

#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"

namespace crumq {

void to_json(nlohmann::json& j, const QuarantineEntry& e) {
    j = nlohmann::json{{"item_id", e.item_id},
                       {"prompt_id", e.prompt_id},
                       {"outputs", e.outputs},
                       {"reason", e.reason}};
}

void from_json(const nlohmann::json& j, QuarantineEntry& e) {
    j.at("item_id").get_to(e.item_id);
    j.at("prompt_id").get_to(e.prompt_id);
    j.at("outputs").get_to(e.outputs);
    j.at("reason").get_to(e.reason);
}

void Quarantine::add(QuarantineEntry e) {
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(e));
}

std::vector<QuarantineEntry> Quarantine::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

bool Quarantine::contains(std::string_view item_id) const {
    std::lock_guard lock(mu_);
    for (const auto& e : entries_)
        if (e.item_id == item_id) return true;
    return false;
}

std::size_t Quarantine::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

namespace {

// First run of letters/digits after skipping whitespace and markup such as
// '*', '"', or a leading "answer:" label.
std::string first_word(std::string_view text) {
    std::size_t i = 0;
    auto skip = [&] {
        while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    };
    auto word = [&] {
        std::string w;
        while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i])))
            w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i++]))));
        return w;
    };
    skip();
    auto w = word();
    if (w == "answer" || w == "verdict" || w == "score" || w == "label") {
        if (i < text.size() && text[i] == ':') {
            skip();
            w = word();
        }
    }
    return w;
}

}  // namespace

std::optional<bool> parse_yes_no(std::string_view text) {
    auto w = first_word(text);
    if (w == "yes" || w == "true") return true;
    if (w == "no" || w == "false") return false;
    return std::nullopt;
}

std::optional<int> parse_likert(std::string_view text) {
    auto w = first_word(text);
    if (w == "0") return 0;
    if (w == "1") return 1;
    if (w == "2") return 2;
    return std::nullopt;
}

void Judge::require_grammar(const std::string& prompt_id, OutputGrammar g) const {
    const auto& c = client_.prompts().at(prompt_id);
    if (c.grammar != g)
        throw PreconditionError("prompt '" + prompt_id + "' has output grammar " +
                                std::string(to_string(c.grammar)) + ", expected " +
                                std::string(to_string(g)));
}

std::optional<bool> Judge::binary(const std::string& prompt_id, const Slots& inputs,
                                  std::string_view item_id) {
    require_grammar(prompt_id, OutputGrammar::yes_no);
    return ask<bool>(prompt_id, inputs, item_id, parse_yes_no);
}

std::optional<int> Judge::likert(const std::string& prompt_id, const Slots& inputs,
                                 std::string_view item_id) {
    require_grammar(prompt_id, OutputGrammar::likert_0_2);
    return ask<int>(prompt_id, inputs, item_id, parse_likert);
}

}  // namespace crumq
