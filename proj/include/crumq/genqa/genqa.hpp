#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "crumq/core/types.hpp"
#include "crumq/providers/judge.hpp"
#include "crumq/text/tokenizer.hpp"

namespace crumq::genqa {

inline constexpr int kDefaultChunkTokens = Chunk::kMaxTokens;
inline constexpr std::size_t kDefaultContextCap = 50;
inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();
inline constexpr int kDefaultMaxPairs = 10;

/// Splits `doc.body` into consecutive, non-overlapping chunks of
/// `chunk_tokens` tokens (the last one shorter). A chunk's text runs from its
/// first token to the next chunk's first token, so the chunks concatenate to
/// the body minus leading whitespace.
std::vector<Chunk> chunk_documents(const DocumentRef& doc, const Topic& topic,
                                   const Request& request, const Tokenizer& tokenizer,
                                   int chunk_tokens = kDefaultChunkTokens);

/// Same split, tagged with explicit topic and request ids (empty for the
/// corpus-wide verification index).
std::vector<Chunk> chunk_body(const DocumentRef& doc, const std::string& topic_id,
                              const std::string& request_id, const Tokenizer& tokenizer,
                              int chunk_tokens = kDefaultChunkTokens);

/// Binary relevance judgment against topic and request. Sets
/// `relevance_passed`; a quarantined verdict leaves it unset and returns false.
bool filter_chunk_relevance(Judge& judge, Chunk& chunk, const Topic& topic, const Request& request);

/// Bucket of the context search space: groups of `size` chunks with
/// `n_external` external chunks.
struct BucketKey {
    int size = 0;
    int n_external = 0;
    auto operator<=>(const BucketKey&) const = default;
};

/// Candidate count of every non-empty bucket for `n_ext` external and
/// `n_gold` gold chunks. Saturates at UINT64_MAX.
std::map<BucketKey, std::uint64_t> bucket_counts(std::size_t n_ext, std::size_t n_gold);

/// All 2-6 chunk groups with at least one external chunk, bucketed by
/// (size, n_external); a bucket with more than `cap` candidates keeps a seeded
/// uniform sample of exactly `cap`. Output is ordered by bucket, then by
/// position in the bucket's combinatorial order.
std::vector<ContextGroup> enumerate_contexts(const std::vector<Chunk>& chunks,
                                             std::size_t cap, std::uint64_t seed);

/// Parsed generator output.
struct QaDraft {
    std::string question;
    std::string answer;
    std::set<int> hops;  // cited passage numbers
};

/// Reads "Q: / A: / HOPS:" blocks. Blocks missing a field or citing unknown
/// passages are dropped and counted in `skipped`.
std::vector<QaDraft> parse_qa_pairs(std::string_view text, int n_passages, int* skipped = nullptr);

/// Generation template used for a context; rotates across formulations.
std::string qa_template_for(const ContextGroup& context);

/// Asks the generator for up to `max_pairs` multi-hop pairs over the context.
/// `chunks` must hold every chunk of the context.
std::vector<CrumQA> generate_seed_qa(ChatClient& generator, const ContextGroup& context,
                                     const std::map<std::string, const Chunk*>& chunks,
                                     int max_pairs = kDefaultMaxPairs);

}  // namespace crumq::genqa
