#include "crumq/vetting/vetting.hpp"

#include <algorithm>
#include <cctype>
#include <random>

#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/core/random.hpp"
#include "crumq/text/passages.hpp"

namespace crumq::vetting {

namespace {

PassageBlock passages_of(const std::vector<const Chunk*>& chunks) {
    std::vector<std::string_view> texts;
    texts.reserve(chunks.size());
    for (const auto* c : chunks) texts.push_back(c->text);
    return label_passages(texts);
}

constexpr const char* kOracleSetting =
    "oracle: the passages include both the corpus documents and the external documents";
constexpr const char* kCorpusSetting =
    "corpus only: the passages are the best matches from the given corpus and nothing else is available";

}  // namespace

std::optional<VerificationResult> verify_unanswerability(
    Judge& judge, CrumQA& qa, const retrieval::VectorIndex& corpus_index,
    EmbeddingClient& embedder, const ChunkMap& corpus_chunks, std::size_t k) {
    if (qa.status.stage != QaStage::seed) throw PreconditionError("qa " + qa.id + " is not a seed");
    if (corpus_index.size() == 0) throw PreconditionError("corpus index is empty");
    auto hits = retrieval::search_topk(corpus_index, embedder, qa.question, k);
    std::vector<const Chunk*> retrieved;
    VerificationResult res;
    res.qa_id = qa.id;
    for (const auto& h : hits) {
        auto it = corpus_chunks.find(h.chunk_id);
        if (it == corpus_chunks.end())
            throw PreconditionError("corpus index entry " + h.chunk_id + " has no chunk text");
        retrieved.push_back(it->second);
        res.retrieved_chunk_ids.push_back(h.chunk_id);
    }
    auto answerable = judge.binary(
        "verify_answerable", {{"question", qa.question}, {"chunks", passages_of(retrieved).text}}, qa.id);
    if (!answerable) return std::nullopt;
    res.judged_unanswerable = !*answerable;
    qa.advance(res.judged_unanswerable ? QaStatus{QaStage::verified_unanswerable, std::nullopt}
                                       : QaStatus::rejected(RejectReason::verify_fail));
    return res;
}

std::optional<CotAnnotation> parse_cot(std::string_view text, int n_passages) {
    std::set<int> cited;
    int steps = 0;
    std::size_t pos = 0;
    bool in_step = false;
    bool step_cites = false;
    auto close_step = [&] {
        if (in_step && !step_cites) steps = -1000000;  // a step without a citation
    };
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        std::size_t i = 0;
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t d = i;
        while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
        bool numbered = d > i && d < line.size() && (line[d] == '.' || line[d] == ')');
        if (numbered) {
            close_step();
            in_step = true;
            step_cites = false;
            ++steps;
        }
        if (!in_step) continue;
        auto c = parse_citations(line, n_passages);
        if (!c) return std::nullopt;
        if (!c->empty()) step_cites = true;
        cited.insert(c->begin(), c->end());
    }
    close_step();
    if (steps <= 0 || cited.empty()) return std::nullopt;
    return CotAnnotation{std::string(text), static_cast<int>(cited.size())};
}

std::optional<CotAnnotation> annotate_cot(Judge& judge, CrumQA& qa,
                                          const std::vector<const Chunk*>& oracle_chunks) {
    if (qa.status.stage != QaStage::verified_unanswerable)
        throw PreconditionError("qa " + qa.id + " is not verified_unanswerable");
    auto block = passages_of(oracle_chunks);
    const int n = static_cast<int>(oracle_chunks.size());
    auto ann = judge.ask<CotAnnotation>(
        "annotate_cot",
        {{"question", qa.question}, {"answer", qa.answer}, {"chunks", block.text}, {"chunk_labels", block.labels}},
        qa.id, [n](std::string_view t) { return parse_cot(t, n); });
    if (ann) {
        qa.cot = ann->cot;
        qa.hop_count = ann->hop_count;
    }
    return ann;
}

void filter_by_hops(CrumQA& qa, bool keep_single_hop) {
    if (qa.status.stage != QaStage::verified_unanswerable)
        throw PreconditionError("qa " + qa.id + " is not verified_unanswerable");
    if (!qa.hop_count) throw PreconditionError("qa " + qa.id + " has no hop count");
    bool ok = *qa.hop_count == qa.intended_hop_count && (*qa.hop_count > 1 || keep_single_hop);
    qa.advance(ok ? QaStatus{QaStage::hop_checked, std::nullopt}
                  : QaStatus::rejected(RejectReason::hop_mismatch));
}

std::optional<QualityScores> score_quality(Judge& judge, CrumQA& qa,
                                           const std::vector<const Chunk*>& oracle_chunks,
                                           const std::vector<const Chunk*>& corpus_view) {
    if (qa.status.stage != QaStage::hop_checked)
        throw PreconditionError("qa " + qa.id + " is not hop_checked");
    const auto oracle = passages_of(oracle_chunks).text;
    const auto corpus = passages_of(corpus_view).text;
    auto ask = [&](const char* prompt, const std::string& chunks, const char* setting) {
        return judge.likert(prompt,
                            {{"question", qa.question}, {"answer", qa.answer}, {"chunks", chunks}, {"setting", setting}},
                            qa.id);
    };
    std::array<std::optional<int>, 6> s{
        ask("quality_context_necessity", oracle, kOracleSetting),
        ask("quality_context_sufficiency", oracle, kOracleSetting),
        ask("quality_answer_correctness", oracle, kOracleSetting),
        ask("quality_answer_uniqueness", oracle, kOracleSetting),
        ask("quality_context_necessity", corpus, kCorpusSetting),
        ask("quality_context_sufficiency", corpus, kCorpusSetting),
    };
    for (const auto& v : s)
        if (!v) return std::nullopt;
    QualityScores q{*s[0], *s[1], *s[2], *s[3], *s[4], *s[5]};
    qa.quality = q;
    qa.advance(q.min_score() >= 1 ? QaStatus{QaStage::accepted, std::nullopt}
                                  : QaStatus::rejected(RejectReason::quality_fail));
    return q;
}

std::vector<CrumQA> sample_for_review(const std::vector<CrumQA>& qas, std::size_t n,
                                      std::uint64_t seed) {
    std::vector<const CrumQA*> acc, rej;
    for (const auto& q : qas) {
        if (q.status.stage == QaStage::accepted) acc.push_back(&q);
        if (q.status.stage == QaStage::rejected) rej.push_back(&q);
    }
    auto by_id = [](const CrumQA* a, const CrumQA* b) { return a->id < b->id; };
    std::sort(acc.begin(), acc.end(), by_id);
    std::sort(rej.begin(), rej.end(), by_id);
    std::mt19937_64 rng(derive_seed(seed, "review"));
    seeded_shuffle(acc, rng);
    seeded_shuffle(rej, rng);
    std::size_t take_acc = std::min(acc.size(), n / 2 + n % 2);
    std::size_t take_rej = std::min(rej.size(), n - take_acc);
    take_acc = std::min(acc.size(), n - take_rej);
    std::vector<CrumQA> out;
    for (std::size_t i = 0; i < take_acc; ++i) out.push_back(*acc[i]);
    for (std::size_t i = 0; i < take_rej; ++i) out.push_back(*rej[i]);
    std::sort(out.begin(), out.end(), [](const CrumQA& a, const CrumQA& b) { return a.id < b.id; });
    return out;
}

}  // namespace crumq::vetting
