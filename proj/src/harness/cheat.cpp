#include <algorithm>
#include <cctype>

#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"
#include "crumq/core/parallel.hpp"
#include "crumq/harness/harness.hpp"
#include "crumq/text/passages.hpp"

namespace crumq::harness {

std::optional<AnswerSupport> parse_answer_support(std::string_view text, int n_passages) {
    std::optional<std::string> answer;
    std::optional<std::set<int>> support;
    std::size_t pos = 0;
    auto field = [](std::string_view line, std::string_view tag) -> std::optional<std::string_view> {
        if (line.size() < tag.size()) return std::nullopt;
        for (std::size_t i = 0; i < tag.size(); ++i)
            if (std::toupper(static_cast<unsigned char>(line[i])) != tag[i]) return std::nullopt;
        auto v = line.substr(tag.size());
        while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.remove_prefix(1);
        while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.remove_suffix(1);
        return v;
    };
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
        if (auto v = field(line, "ANSWER:"); v && !answer) {
            answer = std::string(*v);
        } else if (auto s = field(line, "SUPPORT:"); s && !support) {
            support = parse_citations(*s, n_passages);
            if (!support) return std::nullopt;
        }
    }
    if (!answer || !support) return std::nullopt;
    return AnswerSupport{*answer, *support};
}

namespace {

struct Prediction {
    std::string answer;
    std::set<std::string> support;
};

std::optional<Prediction> predict(Judge& model, const CrumQA& qa, const std::vector<const Chunk*>& chunks,
                                  const std::string& item) {
    std::vector<std::string_view> texts;
    for (const auto* c : chunks) texts.push_back(c->text);
    auto block = label_passages(texts);
    const int n = static_cast<int>(chunks.size());
    auto r = model.ask<AnswerSupport>(
        "predict_answer_support",
        {{"question", qa.question}, {"chunks", block.text}, {"chunk_labels", block.labels}}, item,
        [n](std::string_view t) { return parse_answer_support(t, n); });
    if (!r) return std::nullopt;
    Prediction p{r->answer, {}};
    for (int i : r->support) p.support.insert(chunks[static_cast<std::size_t>(i - 1)]->id);
    return p;
}

std::set<std::string> gold_support(const CrumQA& qa, const ContextGroup& ctx) {
    std::set<std::string> out;
    if (qa.cot) {
        if (auto cited = parse_citations(*qa.cot, static_cast<int>(ctx.chunk_ids.size()))) {
            for (int i : *cited) out.insert(ctx.chunk_ids[static_cast<std::size_t>(i - 1)]);
        }
    }
    if (out.empty()) out.insert(ctx.chunk_ids.begin(), ctx.chunk_ids.end());
    return out;
}

}  // namespace

CheatScores score_cheatability(Judge& model, const std::vector<CrumQA>& qas,
                               const std::map<std::string, ContextGroup>& contexts,
                               const std::map<std::string, const Chunk*>& chunks,
                               const std::vector<ProbeInstance>& probes, ProbeCredit credit,
                               int workers) {
    std::map<std::string, std::array<const ProbeInstance*, 2>> parts;
    for (const auto& p : probes) {
        if (p.part_index < 0 || p.part_index > 1) throw PreconditionError("probe part index out of range");
        parts[p.qa_id][static_cast<std::size_t>(p.part_index)] = &p;
    }
    auto lookup = [&](const std::vector<std::string>& ids) {
        std::vector<const Chunk*> out;
        for (const auto& id : ids) {
            auto it = chunks.find(id);
            if (it == chunks.end()) throw PreconditionError("unknown chunk " + id);
            out.push_back(it->second);
        }
        return out;
    };

    std::vector<const CrumQA*> todo;
    for (const auto& qa : qas) {
        auto it = parts.find(qa.id);
        if (it == parts.end() || !it->second[0] || !it->second[1]) {
            spdlog::warn("qa {}: no probe pair; left out of cheatability", qa.id);
            continue;
        }
        todo.push_back(&qa);
    }
    std::sort(todo.begin(), todo.end(), [](const CrumQA* a, const CrumQA* b) { return a->id < b->id; });

    struct Row {
        bool ok = false;
        double af = 0, ap = 0, sf = 0, sp = 0;
    };
    std::vector<Row> rows(todo.size());
    parallel_for(todo.size(), workers, [&](std::size_t i) {
        const auto& qa = *todo[i];
        const auto& ctx = contexts.at(qa.context_id);
        const auto& pp = parts.at(qa.id);
        auto full = predict(model, qa, lookup(ctx.chunk_ids), qa.id + ":full");
        auto p0 = predict(model, qa, lookup(pp[0]->chunk_ids), qa.id + ":part0");
        auto p1 = predict(model, qa, lookup(pp[1]->chunk_ids), qa.id + ":part1");
        if (!full || !p0 || !p1) return;
        auto gold = gold_support(qa, ctx);
        std::set<std::string> united = p0->support;
        united.insert(p1->support.begin(), p1->support.end());
        rows[i] = {true,
                   token_f1(full->answer, qa.answer),
                   probe_credit(token_f1(p0->answer, qa.answer), token_f1(p1->answer, qa.answer), credit),
                   support_f1(full->support, gold),
                   support_f1(united, gold)};
    });

    CheatScores out;
    for (std::size_t i = 0; i < todo.size(); ++i) {
        if (!rows[i].ok) continue;
        out.qa_ids.push_back(todo[i]->id);
        out.answer_full.push_back(rows[i].af);
        out.answer_probe.push_back(rows[i].ap);
        out.support_full.push_back(rows[i].sf);
        out.support_probe.push_back(rows[i].sp);
    }
    return out;
}

}  // namespace crumq::harness
