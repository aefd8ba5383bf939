#include "crumq/text/tokenizer.hpp"

#include <cctype>

namespace crumq {

namespace {

bool is_word(unsigned char c) { return c >= 0x80 || std::isalnum(c) || c == '_'; }
bool is_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

}  // namespace

std::vector<std::string> Tokenizer::tokens(std::string_view text) const {
    std::vector<std::string> out;
    for (const auto& s : spans(text)) out.emplace_back(text.substr(s.begin, s.end - s.begin));
    return out;
}

std::vector<std::string> Tokenizer::terms(std::string_view text) const {
    std::vector<std::string> out;
    for (const auto& s : spans(text)) {
        std::string t(text.substr(s.begin, s.end - s.begin));
        bool has_word = false;
        for (auto& ch : t) {
            auto c = static_cast<unsigned char>(ch);
            if (is_word(c)) has_word = true;
            if (c < 0x80) ch = static_cast<char>(std::tolower(c));
        }
        if (has_word) out.push_back(std::move(t));
    }
    return out;
}

std::vector<TokenSpan> SimpleTokenizer::spans(std::string_view text) const {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        auto c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
        } else if (is_word(c)) {
            std::size_t j = i + 1;
            while (j < n && is_word(static_cast<unsigned char>(text[j]))) ++j;
            out.push_back({i, j});
            i = j;
        } else {
            out.push_back({i, i + 1});
            ++i;
        }
    }
    return out;
}

const Tokenizer& default_tokenizer() {
    static const SimpleTokenizer tok;
    return tok;
}

}  // namespace crumq
