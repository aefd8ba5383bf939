#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "crumq/core/types.hpp"
#include "crumq/providers/chat.hpp"
#include "crumq/providers/embed.hpp"
#include "crumq/text/tokenizer.hpp"

namespace crumq::retrieval {

struct Hit {
    std::string chunk_id;
    double score = 0.0;
    bool operator==(const Hit&) const = default;
};

/// Descending score, then ascending id.
bool ranks_before(const Hit& a, const Hit& b);

/// Exhaustive cosine index over unit vectors, stored as one row-major float
/// matrix. Immutable once built; concurrent searches are safe.
class VectorIndex {
  public:
    VectorIndex(std::size_t dimension, std::string embedder_identity);

    /// Throws PreconditionError on duplicate ids, wrong dimension, or a
    /// vector that is not unit length.
    void add(const std::string& id, const Vector& unit);

    std::size_t size() const { return ids_.size(); }
    std::size_t dimension() const { return dim_; }
    const std::string& embedder_identity() const { return identity_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const float* row(std::size_t i) const { return data_.data() + i * dim_; }

    /// Top min(k, size) entries by dot product with `query`. Scoring runs on
    /// OpenMP threads.
    std::vector<Hit> search(const Vector& query, std::size_t k) const;
    /// Single-threaded reference for `search`; same results.
    std::vector<Hit> search_serial(const Vector& query, std::size_t k) const;

    /// Binary sidecar: "CRUMQVIX", format version, dimension, count, embedder
    /// identity, then (id, vector) entries.
    void save(const std::filesystem::path& path) const;
    static VectorIndex load(const std::filesystem::path& path);

  private:
    std::vector<Hit> select_top(std::vector<double> scores, std::size_t k) const;

    std::size_t dim_;
    std::string identity_;
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> pos_;
};

inline constexpr std::uint32_t kIndexFormatVersion = 1;

/// One entry per chunk. Throws PreconditionError on empty input or duplicate
/// ids; an embedding failure is rethrown naming the chunk.
VectorIndex build_index(const std::vector<Chunk>& chunks, EmbeddingClient& embedder);

/// Embeds `query_text` and returns the top-k entries. k must be >= 1.
std::vector<Hit> search_topk(const VectorIndex& index, EmbeddingClient& embedder,
                             const std::string& query_text, std::size_t k);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Okapi BM25 over tokenizer terms.
class LexicalIndex {
  public:
    LexicalIndex(const std::vector<Chunk>& chunks, const Tokenizer& tokenizer, Bm25Params params = {});

    /// Documents with a positive score, best first, at most k.
    std::vector<Hit> search(const std::string& query_text, std::size_t k) const;
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

  private:
    const Tokenizer& tokenizer_;
    Bm25Params params_;
    std::vector<std::string> ids_;
    std::vector<std::size_t> lengths_;
    double avg_length_ = 0.0;
    // term -> (doc index, term frequency)
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, int>>> postings_;
};

std::vector<Hit> lexical_search(const LexicalIndex& index, const std::string& query_text, std::size_t k);

inline constexpr double kRrfConstant = 60.0;
inline constexpr std::size_t kCandidateDepth = 100;

/// Reciprocal-rank fusion: score(d) = sum over rankings of 1 / (constant + rank),
/// ranks starting at 1.
std::vector<Hit> rrf_fuse(const std::vector<std::vector<Hit>>& rankings, std::size_t k,
                          double constant = kRrfConstant);

/// Dense and BM25 rankings (each `depth` deep) fused by RRF. Both indexes must
/// cover the same chunk ids.
std::vector<Hit> ensemble_search(const VectorIndex& index, const LexicalIndex& lexical,
                                 EmbeddingClient& embedder, const std::string& query_text,
                                 std::size_t k, std::size_t depth = kCandidateDepth,
                                 double constant = kRrfConstant);

/// Hypothetical answer passage for `query_text`; the raw query on generator
/// failure.
std::string hyde_rewrite(ChatClient& generator, const std::string& query_text);

/// Reorders a candidate list. Implementations may not add candidates.
class Reranker {
  public:
    virtual ~Reranker() = default;
    virtual std::string id() const = 0;
    virtual std::vector<Hit> rerank(const std::string& query, std::vector<Hit> candidates,
                                    const std::map<std::string, std::string>& texts) = 0;
};

/// Rerankers available to RAG configurations, by id.
class RerankerRegistry {
  public:
    void add(std::shared_ptr<Reranker> r);
    std::shared_ptr<Reranker> find(const std::string& id) const;

  private:
    std::map<std::string, std::shared_ptr<Reranker>> by_id_;
};

}  // namespace crumq::retrieval
