#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace crumq {

struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Splits text into token spans. Implementations must be local: re-tokenizing
/// a substring cut at token starts yields exactly the covered tokens.
class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<TokenSpan> spans(std::string_view text) const = 0;

    std::size_t count(std::string_view text) const { return spans(text).size(); }
    std::vector<std::string> tokens(std::string_view text) const;
    /// Lowercased tokens, punctuation-only tokens dropped. Used for lexical
    /// matching.
    std::vector<std::string> terms(std::string_view text) const;
};

/// Default tokenizer: maximal runs of word characters (ASCII alphanumerics,
/// underscore, and any byte >= 0x80) are one token; every other
/// non-whitespace byte is a token of its own.
class SimpleTokenizer final : public Tokenizer {
  public:
    std::string name() const override { return "simple-v1"; }
    std::vector<TokenSpan> spans(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

}  // namespace crumq
