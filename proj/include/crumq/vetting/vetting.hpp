#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crumq/core/types.hpp"
#include "crumq/providers/embed.hpp"
#include "crumq/providers/judge.hpp"
#include "crumq/retrieval/retrieval.hpp"

namespace crumq::vetting {

using ChunkMap = std::map<std::string, const Chunk*>;

/// Retrieves the top min(k, |corpus|) corpus chunks for the question and asks
/// the judge whether they answer it. "No" advances the pair to
/// verified_unanswerable, "yes" rejects it with verify_fail. A quarantined
/// verdict leaves the pair at seed and returns nullopt.
std::optional<VerificationResult> verify_unanswerability(
    Judge& judge, CrumQA& qa, const retrieval::VectorIndex& corpus_index,
    EmbeddingClient& embedder, const ChunkMap& corpus_chunks,
    std::size_t k = VerificationResult::kTopK);

struct CotAnnotation {
    std::string cot;
    int hop_count = 0;
};

/// Reads a numbered chain of thought whose steps cite passages as [Cn]. The
/// hop count is the number of distinct passages cited. nullopt when there are
/// no numbered steps, a step cites nothing, or a label is out of range.
std::optional<CotAnnotation> parse_cot(std::string_view text, int n_passages);

/// Oracle-setting CoT over `oracle_chunks` (the pair's full context, in
/// context order). Sets cot and hop_count; nullopt if quarantined.
std::optional<CotAnnotation> annotate_cot(Judge& judge, CrumQA& qa,
                                          const std::vector<const Chunk*>& oracle_chunks);

/// hop_count == intended -> hop_checked, otherwise rejected(hop_mismatch).
/// Single-hop pairs pass only when `keep_single_hop` is set.
void filter_by_hops(CrumQA& qa, bool keep_single_hop = false);

/// Six Likert judgments: four in the oracle setting, necessity and
/// sufficiency again over the corpus view. Every score >= 1 accepts,
/// anything lower rejects with quality_fail. nullopt (pair held) if any
/// judgment is quarantined.
std::optional<QualityScores> score_quality(Judge& judge, CrumQA& qa,
                                           const std::vector<const Chunk*>& oracle_chunks,
                                           const std::vector<const Chunk*>& corpus_view);

/// Seeded sample of accepted and rejected pairs for manual review: up to n/2
/// of each (the remainder from whichever has more), sorted by id.
std::vector<CrumQA> sample_for_review(const std::vector<CrumQA>& qas, std::size_t n,
                                      std::uint64_t seed);

}  // namespace crumq::vetting
