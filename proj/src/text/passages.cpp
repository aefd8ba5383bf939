#include "crumq/text/passages.hpp"

#include <cctype>

namespace crumq {

PassageBlock label_passages(const std::vector<std::string_view>& texts) {
    PassageBlock b;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto label = "[C" + std::to_string(i + 1) + "]";
        if (i) {
            b.labels += ", ";
            b.text += "\n\n";
        }
        b.labels += label;
        b.text += label + " " + std::string(texts[i]);
    }
    return b;
}

std::optional<std::set<int>> parse_citations(std::string_view text, int n_passages) {
    std::set<int> out;
    for (std::size_t i = 0; i + 2 < text.size(); ++i) {
        if (text[i] != '[' || (text[i + 1] != 'C' && text[i + 1] != 'c')) continue;
        std::size_t j = i + 2;
        long n = 0;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])) && n < 1000000)
            n = n * 10 + (text[j++] - '0');
        if (j == i + 2 || j >= text.size() || text[j] != ']') continue;
        if (n < 1 || n > n_passages) return std::nullopt;
        out.insert(static_cast<int>(n));
        i = j;
    }
    return out;
}

}  // namespace crumq
