#include "crumq/genqa/genqa.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/core/random.hpp"
#include "crumq/text/passages.hpp"

namespace crumq::genqa {

std::vector<Chunk> chunk_body(const DocumentRef& doc, const std::string& topic_id,
                              const std::string& request_id, const Tokenizer& tokenizer,
                              int chunk_tokens) {
    if (chunk_tokens < 1 || chunk_tokens > Chunk::kMaxTokens)
        throw PreconditionError("chunk_tokens must lie in [1, " + std::to_string(Chunk::kMaxTokens) +
                                "]");
    auto spans = tokenizer.spans(doc.body);
    std::vector<Chunk> out;
    if (spans.empty()) {
        spdlog::warn("document {} has an empty body; no chunks", doc.id);
        return out;
    }
    const std::size_t step = static_cast<std::size_t>(chunk_tokens);
    for (std::size_t first = 0, index = 0; first < spans.size(); first += step, ++index) {
        std::size_t last = std::min(first + step, spans.size());
        std::size_t begin = spans[first].begin;
        std::size_t end = last < spans.size() ? spans[last].begin : doc.body.size();
        Chunk c;
        c.doc_id = doc.id;
        c.index_in_doc = static_cast<int>(index);
        c.token_count = static_cast<int>(last - first);
        c.text = doc.body.substr(begin, end - begin);
        c.source_kind = doc.source_kind;
        c.topic_id = topic_id;
        c.request_id = request_id;
        c.id = assign_id(RecordKind::chunk,
                         canonical_fields(doc.id, topic_id, request_id, std::to_string(index)));
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Chunk> chunk_documents(const DocumentRef& doc, const Topic& topic,
                                   const Request& request, const Tokenizer& tokenizer,
                                   int chunk_tokens) {
    return chunk_body(doc, topic.id, request.id, tokenizer, chunk_tokens);
}

bool filter_chunk_relevance(Judge& judge, Chunk& chunk, const Topic& topic, const Request& request) {
    if (chunk.topic_id.empty() || chunk.request_id.empty())
        throw PreconditionError("chunk " + chunk.id + " lacks topic or request");
    if (chunk.topic_id != topic.id || chunk.request_id != request.id)
        throw PreconditionError("chunk " + chunk.id + " belongs to a different topic or request");
    auto verdict = judge.binary(
        "chunk_relevance", {{"topic", topic.phrase}, {"request", request.text}, {"chunk", chunk.text}},
        chunk.id);
    if (!verdict) {
        chunk.relevance_passed.reset();
        return false;
    }
    chunk.relevance_passed = *verdict;
    return *verdict;
}

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t binom(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r >= kSaturated) return kSaturated;
    }
    return static_cast<std::uint64_t>(r);
}

std::uint64_t mul_sat(std::uint64_t a, std::uint64_t b) {
    if (a == kSaturated || b == kSaturated) return kSaturated;
    unsigned __int128 r = static_cast<unsigned __int128>(a) * b;
    return r >= kSaturated ? kSaturated : static_cast<std::uint64_t>(r);
}

// rank-th k-subset of [0, n) in lexicographic order.
std::vector<std::size_t> unrank_combination(std::size_t n, std::size_t k, std::uint64_t rank) {
    std::vector<std::size_t> out;
    out.reserve(k);
    std::size_t c = 0;
    while (out.size() < k) {
        std::uint64_t with_c = binom(n - c - 1, k - out.size() - 1);
        if (rank < with_c) {
            out.push_back(c);
        } else {
            rank -= with_c;
        }
        ++c;
    }
    return out;
}

// k distinct values from [0, n), sorted (Floyd).
std::vector<std::size_t> sample_combination(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    std::set<std::size_t> picked;
    for (std::size_t j = n - k; j < n; ++j) {
        auto t = static_cast<std::size_t>(uniform_below(rng, j + 1));
        if (!picked.insert(t).second) picked.insert(j);
    }
    return {picked.begin(), picked.end()};
}

using Selection = std::pair<std::vector<std::size_t>, std::vector<std::size_t>>;

std::vector<Selection> select_bucket(std::size_t n_ext, std::size_t n_gold, std::size_t e,
                                     std::size_t g, std::uint64_t count, std::size_t cap,
                                     std::uint64_t seed) {
    std::vector<Selection> out;
    const std::uint64_t per_ext = binom(n_gold, g);
    auto at = [&](std::uint64_t r) {
        return Selection{unrank_combination(n_ext, e, r / per_ext),
                         unrank_combination(n_gold, g, r % per_ext)};
    };
    if (count <= cap) {
        for (std::uint64_t r = 0; r < count; ++r) out.push_back(at(r));
        return out;
    }
    std::mt19937_64 rng(seed);
    if (count != kSaturated) {
        std::set<std::uint64_t> ranks;
        for (std::uint64_t j = count - cap; j < count; ++j) {
            std::uint64_t t = uniform_below(rng, j + 1);
            if (!ranks.insert(t).second) ranks.insert(j);
        }
        for (auto r : ranks) out.push_back(at(r));
        return out;
    }
    // Too many candidates to rank: draw uniform subsets and reject repeats.
    std::set<Selection> drawn;
    while (drawn.size() < cap)
        drawn.insert({sample_combination(n_ext, e, rng), sample_combination(n_gold, g, rng)});
    return {drawn.begin(), drawn.end()};
}

}  // namespace

std::map<BucketKey, std::uint64_t> bucket_counts(std::size_t n_ext, std::size_t n_gold) {
    std::map<BucketKey, std::uint64_t> out;
    for (int s = static_cast<int>(ContextGroup::kMinChunks);
         s <= static_cast<int>(ContextGroup::kMaxChunks); ++s) {
        for (int e = 1; e <= s; ++e) {
            auto c = mul_sat(binom(n_ext, e), binom(n_gold, s - e));
            if (c > 0) out[{s, e}] = c;
        }
    }
    return out;
}

std::vector<ContextGroup> enumerate_contexts(const std::vector<Chunk>& chunks, std::size_t cap,
                                             std::uint64_t seed) {
    if (cap < 1) throw PreconditionError("context cap must be >= 1");
    std::vector<ContextGroup> out;
    if (chunks.size() < ContextGroup::kMinChunks) {
        spdlog::warn("fewer than {} relevant chunks; no contexts", ContextGroup::kMinChunks);
        return out;
    }
    const std::string& topic = chunks.front().topic_id;
    std::vector<const Chunk*> ext, gold;
    std::set<std::string> seen;
    for (const auto& c : chunks) {
        if (c.topic_id != topic)
            throw PreconditionError("contexts are enumerated within one topic; chunk " + c.id +
                                    " belongs to " + c.topic_id);
        if (c.relevance_passed == false)
            throw PreconditionError("chunk " + c.id + " failed the relevance filter");
        if (!seen.insert(c.id).second) throw PreconditionError("duplicate chunk " + c.id);
        (c.source_kind == SourceKind::external ? ext : gold).push_back(&c);
    }
    auto by_id = [](const Chunk* a, const Chunk* b) { return a->id < b->id; };
    std::sort(ext.begin(), ext.end(), by_id);
    std::sort(gold.begin(), gold.end(), by_id);

    for (const auto& [key, count] : bucket_counts(ext.size(), gold.size())) {
        const std::size_t e = static_cast<std::size_t>(key.n_external);
        const std::size_t g = static_cast<std::size_t>(key.size - key.n_external);
        auto bucket_seed = derive_seed(seed, canonical_fields(topic, std::to_string(key.size),
                                                              std::to_string(key.n_external)));
        for (const auto& [ei, gi] : select_bucket(ext.size(), gold.size(), e, g, count, cap, bucket_seed)) {
            std::vector<std::string> ids;
            for (auto i : ei) ids.push_back(ext[i]->id);
            for (auto i : gi) ids.push_back(gold[i]->id);
            out.push_back(ContextGroup::make(std::move(ids), key.n_external,
                                             key.size - key.n_external));
        }
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool take_field(std::string_view line, std::string_view tag, std::string& out) {
    if (line.size() < tag.size()) return false;
    for (std::size_t i = 0; i < tag.size(); ++i)
        if (std::toupper(static_cast<unsigned char>(line[i])) != tag[i]) return false;
    out = std::string(trim(line.substr(tag.size())));
    return true;
}

}  // namespace

std::vector<QaDraft> parse_qa_pairs(std::string_view text, int n_passages, int* skipped) {
    std::vector<QaDraft> out;
    int bad = 0;
    struct Block {
        std::string q, a, hops;
        bool has_q = false, has_a = false, has_hops = false;
        bool any() const { return has_q || has_a || has_hops; }
    } cur;
    auto flush = [&] {
        if (!cur.any()) return;
        std::optional<std::set<int>> cited;
        if (cur.has_q && cur.has_a && cur.has_hops && !cur.q.empty() && !cur.a.empty())
            cited = parse_citations(cur.hops, n_passages);
        if (cited && !cited->empty()) {
            out.push_back({cur.q, cur.a, *cited});
        } else {
            ++bad;
        }
        cur = Block{};
    };
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        std::string value;
        if (line.empty()) {
            flush();
        } else if (take_field(line, "Q:", value)) {
            if (cur.has_q) flush();
            cur.q = value;
            cur.has_q = true;
        } else if (take_field(line, "A:", value)) {
            cur.a = value;
            cur.has_a = true;
        } else if (take_field(line, "HOPS:", value)) {
            cur.hops = value;
            cur.has_hops = true;
        } else if (cur.has_hops) {
            cur.hops += " " + std::string(line);
        } else if (cur.has_a) {
            cur.a += " " + std::string(line);
        } else if (cur.has_q) {
            cur.q += " " + std::string(line);
        }
    }
    flush();
    if (skipped) *skipped = bad;
    return out;
}

std::string qa_template_for(const ContextGroup& context) {
    static const std::array<const char*, 4> kTemplates{
        "generate_qa_multidoc", "generate_qa_comparison", "generate_qa_temporal",
        "generate_qa_synthesis"};
    auto digest = sha256_hex(context.id);
    return kTemplates[std::stoul(digest.substr(0, 8), nullptr, 16) % kTemplates.size()];
}

std::vector<CrumQA> generate_seed_qa(ChatClient& generator, const ContextGroup& context,
                                     const std::map<std::string, const Chunk*>& chunks,
                                     int max_pairs) {
    if (max_pairs < 1) throw PreconditionError("max_pairs must be >= 1");
    try {
        validate(context);
    } catch (const FormatError& e) {
        throw PreconditionError(e.what());
    }
    std::vector<std::string_view> texts;
    int gold = 0;
    for (const auto& id : context.chunk_ids) {
        auto it = chunks.find(id);
        if (it == chunks.end()) throw PreconditionError("context " + context.id + " names unknown chunk " + id);
        if (it->second->source_kind == SourceKind::gold) ++gold;
        texts.push_back(it->second->text);
    }
    if (gold != context.n_gold)
        throw PreconditionError("context " + context.id + " gold count disagrees with its chunks");
    if (context.kind == UnanswerableKind::fully_unanswerable && gold != 0)
        throw PreconditionError("fully unanswerable context " + context.id + " holds gold chunks");
    if (context.kind == UnanswerableKind::partially_unanswerable && gold == 0)
        throw PreconditionError("partially unanswerable context " + context.id + " has no gold chunk");

    auto block = label_passages(texts);
    auto r = generator.chat({qa_template_for(context),
                             {{"kind", std::string(to_string(context.kind))},
                              {"chunks", block.text},
                              {"chunk_labels", block.labels},
                              {"max_pairs", std::to_string(max_pairs)}}});
    int skipped = 0;
    auto drafts = parse_qa_pairs(r.text, static_cast<int>(texts.size()), &skipped);
    if (skipped > 0) spdlog::warn("context {}: skipped {} malformed QA pairs", context.id, skipped);
    if (static_cast<int>(drafts.size()) > max_pairs) drafts.resize(static_cast<std::size_t>(max_pairs));

    std::vector<CrumQA> out;
    std::set<std::string> ids;
    for (auto& d : drafts) {
        auto qa = CrumQA::make_seed(context, std::move(d.question), std::move(d.answer),
                                    static_cast<int>(d.hops.size()));
        if (ids.insert(qa.id).second) out.push_back(std::move(qa));
    }
    return out;
}

}  // namespace crumq::genqa
