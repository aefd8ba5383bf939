#include "crumq/providers/embed.hpp"

#include <cmath>
#include <mutex>
#include <random>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/text/tokenizer.hpp"

namespace crumq {

void normalize(Vector& v) {
    double n2 = 0.0;
    for (float x : v) n2 += static_cast<double>(x) * x;
    if (n2 <= 0.0) throw PreconditionError("cannot normalize a zero vector");
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& x : v) x = static_cast<float>(x * inv);
}

double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

HashProjectionEmbedder::HashProjectionEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw PreconditionError("embedding dimension must be positive");
}

std::string HashProjectionEmbedder::identity() const {
    return "hash-projection/d" + std::to_string(dimension_) + "/s" + std::to_string(seed_);
}

void HashProjectionEmbedder::set_override(const std::string& text, Vector v) {
    overrides_[text] = std::move(v);
}

Vector HashProjectionEmbedder::token_vector(std::string_view token) const {
    std::mt19937_64 rng(derive_seed(seed_, token));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector v(dimension_);
    for (auto& x : v) x = static_cast<float>(gauss(rng));
    return v;
}

std::vector<Vector> HashProjectionEmbedder::embed(const std::vector<std::string>& texts) {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        if (auto it = overrides_.find(text); it != overrides_.end()) {
            out.push_back(it->second);
            continue;
        }
        auto terms = default_tokenizer().terms(text);
        Vector acc(dimension_, 0.0f);
        if (terms.empty()) {
            acc = token_vector("\x01raw:" + text);
        } else {
            for (const auto& t : terms) {
                auto tv = token_vector(t);
                for (std::size_t i = 0; i < dimension_; ++i) acc[i] += tv[i];
            }
        }
        out.push_back(std::move(acc));
    }
    return out;
}

EmbeddingClient::EmbeddingClient(std::shared_ptr<Embedder> backend,
                                 std::shared_ptr<CallCache> cache)
    : backend_(std::move(backend)), cache_(std::move(cache)) {
    if (!backend_) throw PreconditionError("EmbeddingClient needs a backend");
}

std::string EmbeddingClient::text_digest(const std::string& text) const {
    return sha256_hex(canonical_fields("embed", backend_->identity(), text));
}

std::vector<Vector> EmbeddingClient::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed needs at least one text");
    std::vector<Vector> out(texts.size());
    std::vector<std::size_t> missing;
    {
        std::shared_lock lock(mu_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            auto it = memo_.find(texts[i]);
            if (it != memo_.end()) {
                out[i] = it->second;
            } else {
                missing.push_back(i);
            }
        }
    }
    std::vector<std::size_t> to_fetch;
    for (auto i : missing) {
        if (cache_) {
            if (auto hit = cache_->get(text_digest(texts[i]))) {
                try {
                    out[i] = hit->at("vector").get<Vector>();
                    continue;
                } catch (const nlohmann::json::exception&) {
                }
            }
        }
        to_fetch.push_back(i);
    }
    if (!to_fetch.empty()) {
        std::vector<std::string> batch;
        batch.reserve(to_fetch.size());
        for (auto i : to_fetch) batch.push_back(texts[i]);
        ++backend_calls_;
        auto vecs = backend_->embed(batch);
        if (vecs.size() != batch.size())
            throw ProviderError("embedder returned " + std::to_string(vecs.size()) +
                                    " vectors for " + std::to_string(batch.size()) + " texts",
                                false);
        for (std::size_t k = 0; k < vecs.size(); ++k) {
            normalize(vecs[k]);
            out[to_fetch[k]] = std::move(vecs[k]);
            if (cache_) cache_->put(text_digest(batch[k]), {{"vector", out[to_fetch[k]]}});
        }
    }
    const auto dim = out.front().size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].size() != dim)
            throw Error("embedding dimension mismatch at index " + std::to_string(i) + ": got " +
                        std::to_string(out[i].size()) + ", expected " + std::to_string(dim));
    }
    {
        std::unique_lock lock(mu_);
        for (auto i : missing) memo_.emplace(texts[i], out[i]);
    }
    return out;
}

}  // namespace crumq
