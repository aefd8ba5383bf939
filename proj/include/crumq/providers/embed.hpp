#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "crumq/core/types.hpp"
#include "crumq/providers/cache.hpp"

namespace crumq {

class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual std::string identity() const = 0;
    /// One vector per input, order-aligned. Need not be normalized.
    virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
};

/// Deterministic offline embedder. Each lowercased token seeds a Gaussian
/// random vector from its digest; a text is the normalized sum of its token
/// vectors, so texts sharing vocabulary point in similar directions. Texts
/// listed in the override table map to the given vector instead.
class HashProjectionEmbedder final : public Embedder {
  public:
    explicit HashProjectionEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0);

    std::string identity() const override;
    std::vector<Vector> embed(const std::vector<std::string>& texts) override;

    void set_override(const std::string& text, Vector v);
    std::size_t dimension() const { return dimension_; }

  private:
    Vector token_vector(std::string_view token) const;

    std::size_t dimension_;
    std::uint64_t seed_;
    std::map<std::string, Vector> overrides_;
};

/// Scales `v` to unit L2 norm. Throws PreconditionError for a zero vector.
void normalize(Vector& v);
double dot(const Vector& a, const Vector& b);

/// Front end for embeddings: per-text caching (memory, and disk when a cache
/// is given), dimension checks, and unit normalization.
class EmbeddingClient {
  public:
    explicit EmbeddingClient(std::shared_ptr<Embedder> backend,
                             std::shared_ptr<CallCache> cache = nullptr);

    /// Throws PreconditionError on empty input and Error naming the offending
    /// index when dimensions disagree.
    std::vector<Vector> embed(const std::vector<std::string>& texts);
    Vector embed_one(const std::string& text) { return embed({text}).front(); }

    std::string identity() const { return backend_->identity(); }
    long backend_calls() const { return backend_calls_.load(); }

  private:
    std::string text_digest(const std::string& text) const;

    std::shared_ptr<Embedder> backend_;
    std::shared_ptr<CallCache> cache_;
    std::unordered_map<std::string, Vector> memo_;
    mutable std::shared_mutex mu_;
    std::atomic<long> backend_calls_{0};
};

}  // namespace crumq
