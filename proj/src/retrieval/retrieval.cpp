#include "crumq/retrieval/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"
#include "crumq/core/jsonl.hpp"

namespace crumq::retrieval {

static_assert(std::endian::native == std::endian::little, "index sidecar assumes little-endian");

bool ranks_before(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk_id < b.chunk_id;
}

VectorIndex::VectorIndex(std::size_t dimension, std::string embedder_identity)
    : dim_(dimension), identity_(std::move(embedder_identity)) {
    if (dim_ == 0) throw PreconditionError("index dimension must be positive");
}

void VectorIndex::add(const std::string& id, const Vector& unit) {
    if (unit.size() != dim_)
        throw PreconditionError("entry " + id + " has dimension " + std::to_string(unit.size()) +
                                ", index expects " + std::to_string(dim_));
    double norm = 0.0;
    for (float x : unit) norm += static_cast<double>(x) * x;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-4)
        throw PreconditionError("entry " + id + " is not unit-normalized");
    if (!pos_.emplace(id, ids_.size()).second) throw PreconditionError("duplicate index entry " + id);
    ids_.push_back(id);
    data_.insert(data_.end(), unit.begin(), unit.end());
}

namespace {

double row_dot(const float* row, const Vector& q) {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) s += static_cast<double>(row[j]) * q[j];
    return s;
}

}  // namespace

std::vector<Hit> VectorIndex::select_top(std::vector<double> scores, std::size_t k) const {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto before = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids_[a] < ids_[b];
    };
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(), before);
    std::vector<Hit> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({ids_[order[i]], scores[order[i]]});
    return out;
}

std::vector<Hit> VectorIndex::search(const Vector& query, std::size_t k) const {
    if (k < 1) throw PreconditionError("k must be >= 1");
    if (query.size() != dim_) throw PreconditionError("query dimension mismatch");
    const long n = static_cast<long>(ids_.size());
    std::vector<double> scores(ids_.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) scores[static_cast<std::size_t>(i)] = row_dot(row(static_cast<std::size_t>(i)), query);
    return select_top(std::move(scores), k);
}

std::vector<Hit> VectorIndex::search_serial(const Vector& query, std::size_t k) const {
    if (k < 1) throw PreconditionError("k must be >= 1");
    if (query.size() != dim_) throw PreconditionError("query dimension mismatch");
    std::vector<double> scores(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) scores[i] = row_dot(row(i), query);
    return select_top(std::move(scores), k);
}

namespace {

constexpr char kMagic[8] = {'C', 'R', 'U', 'M', 'Q', 'V', 'I', 'X'};

template <typename T>
void put(std::string& buf, T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_str(std::string& buf, const std::string& s) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
    buf += s;
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n) {
        if (buf.size() - pos < n) throw FormatError(path + ": truncated index file");
    }
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof v);
        pos += sizeof v;
        return v;
    }
    std::string get_str() {
        auto n = get<std::uint32_t>();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void VectorIndex::save(const std::filesystem::path& path) const {
    std::string buf(kMagic, sizeof kMagic);
    put<std::uint32_t>(buf, kIndexFormatVersion);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(dim_));
    put<std::uint64_t>(buf, ids_.size());
    put_str(buf, identity_);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        put_str(buf, ids_[i]);
        buf.append(reinterpret_cast<const char*>(row(i)), dim_ * sizeof(float));
    }
    write_file_atomic(path, buf);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
    auto buf = read_file(path);
    Reader r{buf, 0, path.string()};
    r.need(sizeof kMagic);
    if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
        throw FormatError(path.string() + ": not a crumq vector index");
    r.pos = sizeof kMagic;
    auto version = r.get<std::uint32_t>();
    if (version != kIndexFormatVersion)
        throw FormatError(path.string() + ": unsupported index version " + std::to_string(version));
    auto dim = r.get<std::uint32_t>();
    auto count = r.get<std::uint64_t>();
    VectorIndex index(dim, r.get_str());
    Vector v(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto id = r.get_str();
        r.need(dim * sizeof(float));
        std::memcpy(v.data(), buf.data() + r.pos, dim * sizeof(float));
        r.pos += dim * sizeof(float);
        index.add(id, v);
    }
    if (r.pos != buf.size()) throw FormatError(path.string() + ": trailing bytes in index file");
    return index;
}

VectorIndex build_index(const std::vector<Chunk>& chunks, EmbeddingClient& embedder) {
    if (chunks.empty()) throw PreconditionError("cannot index an empty chunk list");
    std::set<std::string> seen;
    for (const auto& c : chunks)
        if (!seen.insert(c.id).second) throw PreconditionError("duplicate chunk id " + c.id);
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    std::vector<Vector> vecs;
    try {
        vecs = embedder.embed(texts);
    } catch (const Error& e) {
        // Find the first chunk that fails on its own to name it.
        for (const auto& c : chunks) {
            try {
                embedder.embed_one(c.text);
            } catch (const Error& inner) {
                throw Error("embedding chunk " + c.id + " failed: " + inner.what());
            }
        }
        throw;
    }
    VectorIndex index(vecs.front().size(), embedder.identity());
    for (std::size_t i = 0; i < chunks.size(); ++i) index.add(chunks[i].id, vecs[i]);
    return index;
}

std::vector<Hit> search_topk(const VectorIndex& index, EmbeddingClient& embedder,
                             const std::string& query_text, std::size_t k) {
    if (k < 1) throw PreconditionError("k must be >= 1");
    if (index.size() == 0) return {};
    if (embedder.identity() != index.embedder_identity())
        throw PreconditionError("index built with " + index.embedder_identity() + ", queried with " +
                                embedder.identity());
    return index.search(embedder.embed_one(query_text), k);
}

LexicalIndex::LexicalIndex(const std::vector<Chunk>& chunks, const Tokenizer& tokenizer,
                           Bm25Params params)
    : tokenizer_(tokenizer), params_(params) {
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto& c : chunks) {
        if (!seen.insert(c.id).second) throw PreconditionError("duplicate chunk id " + c.id);
        auto terms = tokenizer_.terms(c.text);
        std::map<std::string, int> tf;
        for (auto& t : terms) ++tf[t];
        const std::size_t doc = ids_.size();
        for (auto& [t, f] : tf) postings_[t].emplace_back(doc, f);
        ids_.push_back(c.id);
        lengths_.push_back(terms.size());
        total += terms.size();
    }
    avg_length_ = ids_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(ids_.size());
}

std::vector<Hit> LexicalIndex::search(const std::string& query_text, std::size_t k) const {
    if (k < 1) throw PreconditionError("k must be >= 1");
    std::vector<double> scores(ids_.size(), 0.0);
    const double n = static_cast<double>(ids_.size());
    std::set<std::string> query_terms;
    for (auto& t : tokenizer_.terms(query_text)) query_terms.insert(t);
    for (const auto& t : query_terms) {
        auto it = postings_.find(t);
        if (it == postings_.end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (const auto& [doc, f] : it->second) {
            const double norm = avg_length_ > 0 ? static_cast<double>(lengths_[doc]) / avg_length_ : 0.0;
            const double tf = static_cast<double>(f);
            scores[doc] += idf * tf * (params_.k1 + 1.0) /
                           (tf + params_.k1 * (1.0 - params_.b + params_.b * norm));
        }
    }
    std::vector<Hit> hits;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > 0.0) hits.push_back({ids_[i], scores[i]});
    std::sort(hits.begin(), hits.end(), ranks_before);
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::vector<Hit> lexical_search(const LexicalIndex& index, const std::string& query_text, std::size_t k) {
    return index.search(query_text, k);
}

std::vector<Hit> rrf_fuse(const std::vector<std::vector<Hit>>& rankings, std::size_t k, double constant) {
    if (k < 1) throw PreconditionError("k must be >= 1");
    std::map<std::string, double> fused;
    for (const auto& ranking : rankings)
        for (std::size_t r = 0; r < ranking.size(); ++r)
            fused[ranking[r].chunk_id] += 1.0 / (constant + static_cast<double>(r + 1));
    std::vector<Hit> out;
    out.reserve(fused.size());
    for (auto& [id, s] : fused) out.push_back({id, s});
    std::sort(out.begin(), out.end(), ranks_before);
    if (out.size() > k) out.resize(k);
    return out;
}

std::vector<Hit> ensemble_search(const VectorIndex& index, const LexicalIndex& lexical,
                                 EmbeddingClient& embedder, const std::string& query_text,
                                 std::size_t k, std::size_t depth, double constant) {
    if (index.size() != lexical.size())
        throw PreconditionError("dense and lexical indexes cover different chunk sets");
    depth = std::max(depth, k);
    auto dense = search_topk(index, embedder, query_text, depth);
    auto sparse = lexical.search(query_text, depth);
    return rrf_fuse({dense, sparse}, k, constant);
}

std::string hyde_rewrite(ChatClient& generator, const std::string& query_text) {
    try {
        auto r = generator.chat({"hyde_passage", {{"query", query_text}}});
        if (r.text.find_first_not_of(" \t\r\n") == std::string::npos) {
            spdlog::warn("HyDE produced an empty passage; using the raw query");
            return query_text;
        }
        return r.text;
    } catch (const ProviderError& e) {
        spdlog::warn("HyDE rewrite failed ({}); using the raw query", e.what());
        return query_text;
    }
}

void RerankerRegistry::add(std::shared_ptr<Reranker> r) {
    auto id = r->id();
    if (!by_id_.emplace(id, std::move(r)).second) throw PreconditionError("duplicate reranker " + id);
}

std::shared_ptr<Reranker> RerankerRegistry::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : it->second;
}

}  // namespace crumq::retrieval
