#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crumq/core/types.hpp"
#include "crumq/providers/chat.hpp"
#include "crumq/providers/embed.hpp"

namespace crumq::topics {

inline constexpr double kDefaultDedupThreshold = 0.95;

/// Splits a keyphrase-list response on ';' and newlines, trimming blanks,
/// bullets, and surrounding quotes. Phrases equal up to case and whitespace
/// collapse to the first occurrence.
std::vector<std::string> parse_keyphrases(std::string_view text);

/// Initial topics for one request. Returns an empty list (and logs) when the
/// model proposes nothing. Throws PreconditionError for an empty request.
std::vector<Topic> extract_request_keyphrases(ChatClient& generator, const Request& request);

/// Document-grounded refinements of an initial topic. `gold_doc` must be gold
/// and listed in `request`'s gold set, and `topic` must come from `request`.
std::vector<Topic> ground_topics(ChatClient& generator, const Topic& topic,
                                 const DocumentRef& gold_doc, const Request& request);

/// Fills `embedding` on every topic from its phrase.
void embed_topics(EmbeddingClient& embedder, std::vector<Topic>& topics);

/// Greedy first-wins scan over items 0..n-1 in that order: item i is kept
/// iff `similarity(i, k) < threshold` for every kept k. Returns kept indices.
std::vector<std::size_t> greedy_keep(std::size_t n,
                                     const std::function<double(std::size_t, std::size_t)>& similarity,
                                     double threshold);

/// Greedy first-wins deduplication in ascending id order: a topic is kept iff
/// its cosine similarity to every topic kept before it is below `threshold`.
/// Input duplicates (same id) count once. Returns the kept topics in id order.
std::vector<Topic> deduplicate_topics(std::vector<Topic> topics,
                                      double threshold = kDefaultDedupThreshold);

}  // namespace crumq::topics
