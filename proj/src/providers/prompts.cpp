#include "crumq/providers/prompts.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/core/jsonl.hpp"

namespace crumq {

namespace detail {
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_prompt_files();
}

namespace {

constexpr std::array<std::pair<OutputGrammar, std::string_view>, 8> kGrammars{{
    {OutputGrammar::free_text, "free_text"},
    {OutputGrammar::yes_no, "yes_no"},
    {OutputGrammar::likert_0_2, "likert_0_2"},
    {OutputGrammar::response_label, "response_label"},
    {OutputGrammar::keyphrase_list, "keyphrase_list"},
    {OutputGrammar::qa_pairs, "qa_pairs"},
    {OutputGrammar::structured_cot, "structured_cot"},
    {OutputGrammar::answer_support, "answer_support"},
}};

std::string default_strict_suffix(OutputGrammar g) {
    switch (g) {
        case OutputGrammar::yes_no:
            return "\n\nRespond with exactly one word: yes or no.";
        case OutputGrammar::likert_0_2:
            return "\n\nRespond with exactly one digit: 0, 1, or 2.";
        case OutputGrammar::response_label:
            return "\n\nRespond with exactly one of: attempted_answer, refusal, "
                   "clarification_request.";
        case OutputGrammar::structured_cot:
            return "\n\nUse only numbered steps (\"1. ...\"), and cite every chunk you use as "
                   "[C<n>].";
        case OutputGrammar::qa_pairs:
            return "\n\nUse only blocks of the form \"Q: ...\", \"A: ...\", \"HOPS: [C1], "
                   "[C2]\" separated by blank lines.";
        case OutputGrammar::answer_support:
            return "\n\nUse exactly two lines: \"ANSWER: ...\" and \"SUPPORT: [C1], ...\".";
        default:
            return {};
    }
}

}  // namespace

std::string_view to_string(OutputGrammar g) {
    for (const auto& [v, name] : kGrammars)
        if (v == g) return name;
    return "?";
}

OutputGrammar parse_output_grammar(std::string_view s) {
    for (const auto& [v, name] : kGrammars)
        if (name == s) return v;
    throw FormatError("unknown output grammar '" + std::string(s) + "'");
}

PromptContract parse_prompt_contract(std::string_view toml_text, std::string_view source_name) {
    toml::table tbl;
    try {
        tbl = toml::parse(toml_text, source_name);
    } catch (const toml::parse_error& e) {
        throw FormatError(std::string(source_name) + ": " + std::string(e.description()));
    }
    PromptContract c;
    auto need_string = [&](const char* key) {
        auto v = tbl[key].value<std::string>();
        if (!v) throw FormatError(std::string(source_name) + ": missing string '" + key + "'");
        return *v;
    };
    c.id = need_string("id");
    c.grammar = parse_output_grammar(need_string("output"));
    c.template_text = need_string("template");
    if (auto* arr = tbl["slots"].as_array()) {
        for (const auto& el : *arr) {
            auto s = el.value<std::string>();
            if (!s) throw FormatError(std::string(source_name) + ": slots must be strings");
            c.slots.push_back(*s);
        }
    }
    c.strict_suffix = tbl["strict_suffix"].value_or(default_strict_suffix(c.grammar));
    c.temperature = tbl["temperature"].value_or(c.grammar == OutputGrammar::free_text ||
                                                        c.grammar == OutputGrammar::qa_pairs ||
                                                        c.grammar == OutputGrammar::keyphrase_list
                                                    ? 0.7
                                                    : 0.0);
    c.max_output_tokens = tbl["max_output_tokens"].value_or(512);
    for (const auto& slot : c.slots) {
        if (c.template_text.find("{{" + slot + "}}") == std::string::npos)
            throw FormatError(std::string(source_name) + ": template never uses slot '" + slot +
                              "'");
    }
    return c;
}

PromptRegistry PromptRegistry::defaults() {
    PromptRegistry reg;
    for (const auto& [name, text] : detail::embedded_prompt_files())
        reg.add(parse_prompt_contract(text, name));
    return reg;
}

void PromptRegistry::add(PromptContract contract) {
    auto id = contract.id;
    contracts_.insert_or_assign(std::move(id), std::move(contract));
}

void PromptRegistry::load_directory(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".toml") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add(parse_prompt_contract(read_file(f), f.string()));
}

const PromptContract* PromptRegistry::find(std::string_view id) const {
    auto it = contracts_.find(id);
    return it == contracts_.end() ? nullptr : &it->second;
}

const PromptContract& PromptRegistry::at(std::string_view id) const {
    const auto* c = find(id);
    if (!c) throw PreconditionError("unregistered prompt contract '" + std::string(id) + "'");
    return *c;
}

std::vector<std::string> PromptRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : contracts_) out.push_back(id);
    return out;
}

std::string PromptRegistry::render(std::string_view id, const Slots& inputs, bool strict) const {
    const auto& c = at(id);
    for (const auto& slot : c.slots) {
        if (!inputs.contains(slot))
            throw PreconditionError("prompt '" + c.id + "' is missing slot '" + slot + "'");
    }
    std::string out;
    const auto& t = c.template_text;
    std::size_t pos = 0;
    while (pos < t.size()) {
        auto open = t.find("{{", pos);
        if (open == std::string::npos) {
            out.append(t, pos, std::string::npos);
            break;
        }
        auto close = t.find("}}", open + 2);
        if (close == std::string::npos) {
            out.append(t, pos, std::string::npos);
            break;
        }
        out.append(t, pos, open - pos);
        std::string name = t.substr(open + 2, close - open - 2);
        auto it = inputs.find(name);
        if (it != inputs.end()) {
            out += it->second;
        } else {
            out.append(t, open, close + 2 - open);
        }
        pos = close + 2;
    }
    if (strict) out += c.strict_suffix;
    return out;
}

std::string PromptRegistry::digest() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [id, c] : contracts_) {
        j.push_back({id, c.slots, to_string(c.grammar), c.template_text, c.strict_suffix,
                     c.temperature, c.max_output_tokens});
    }
    return sha256_hex(j.dump());
}

}  // namespace crumq
