#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace crumq {

/// Passages labelled [C1], [C2], ... in the order given, as prompts show them.
struct PassageBlock {
    std::string labels;  // "[C1], [C2]"
    std::string text;    // "[C1] ...\n\n[C2] ..."
};

PassageBlock label_passages(const std::vector<std::string_view>& texts);

/// Passage numbers (1-based) cited as [Cn] in `text`. Returns nullopt if any
/// citation names a passage outside [1, n_passages].
std::optional<std::set<int>> parse_citations(std::string_view text, int n_passages);

}  // namespace crumq
