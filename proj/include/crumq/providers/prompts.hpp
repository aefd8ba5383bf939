#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crumq {

using Slots = std::map<std::string, std::string>;

/// How a prompt's output is meant to be read back.
enum class OutputGrammar {
    free_text,
    yes_no,
    likert_0_2,
    response_label,
    keyphrase_list,
    qa_pairs,
    structured_cot,
    answer_support,
};

std::string_view to_string(OutputGrammar g);
OutputGrammar parse_output_grammar(std::string_view s);

/// A named prompt: required input slots, the output grammar, and an editable
/// template with `{{slot}}` placeholders.
struct PromptContract {
    std::string id;
    std::vector<std::string> slots;
    OutputGrammar grammar = OutputGrammar::free_text;
    std::string template_text;
    /// Appended when a caller re-asks after an unparseable answer.
    std::string strict_suffix;
    /// Default sampling temperature: 0.0 for judgments, 0.7 for generation.
    double temperature = 0.0;
    int max_output_tokens = 512;
};

/// Parses a prompt file (TOML with id, slots, output, template, and optional
/// strict_suffix / temperature / max_output_tokens).
PromptContract parse_prompt_contract(std::string_view toml_text, std::string_view source_name);

class PromptRegistry {
  public:
    /// Registry holding the prompt files bundled with the build.
    static PromptRegistry defaults();

    void add(PromptContract contract);
    /// Loads every *.toml file in `dir`, replacing same-id contracts.
    void load_directory(const std::filesystem::path& dir);

    const PromptContract* find(std::string_view id) const;
    const PromptContract& at(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }
    std::vector<std::string> ids() const;

    /// Substitutes slots into the template. Throws PreconditionError for an
    /// unregistered id or a missing slot.
    std::string render(std::string_view id, const Slots& inputs, bool strict = false) const;

    /// Digest over every contract; changes whenever any prompt text changes.
    std::string digest() const;

  private:
    std::map<std::string, PromptContract, std::less<>> contracts_;
};

}  // namespace crumq
