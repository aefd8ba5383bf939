#include <algorithm>
#include <cctype>
#include <map>
#include <random>

#include <spdlog/spdlog.h>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/core/random.hpp"
#include "crumq/harness/harness.hpp"

namespace crumq::harness {

namespace {

void finish(Ratios& r) {
    const double n = static_cast<double>(r.n);
    r.unanswered = static_cast<double>(r.refusals) / n;
    r.clarification = static_cast<double>(r.clarifications) / n;
    r.acceptable = static_cast<double>(r.refusals + r.clarifications) / n;
    r.accuracy = static_cast<double>(r.correct) / n;
}

void count(Ratios& r, const EvalRecord& rec) {
    ++r.n;
    if (rec.label == ResponseLabel::refusal) ++r.refusals;
    if (rec.label == ResponseLabel::clarification_request) ++r.clarifications;
    if (rec.accuracy_judged.value_or(false)) ++r.correct;
}

}  // namespace

MetricsReport compute_unanswerability_metrics(const std::vector<EvalRecord>& records,
                                              const std::map<std::string, int>& hop_counts) {
    if (records.empty()) throw PreconditionError("no evaluation records");
    MetricsReport rep;
    rep.config_id = records.front().config_id;
    std::vector<const EvalRecord*> sorted;
    for (const auto& r : records) {
        if (r.config_id != rep.config_id)
            throw PreconditionError("records mix configurations " + rep.config_id + " and " + r.config_id);
        sorted.push_back(&r);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const EvalRecord* a, const EvalRecord* b) { return a->query_id < b->query_id; });
    for (const auto* r : sorted) {
        if (r->error) {
            ++rep.errored;
            continue;
        }
        count(rep.overall, *r);
        auto it = hop_counts.find(r->query_id);
        count(rep.by_hop[it == hop_counts.end() ? 0 : it->second], *r);
    }
    rep.error_rate = static_cast<double>(rep.errored) / static_cast<double>(records.size());
    if (rep.overall.n == 0) throw PreconditionError("every record of " + rep.config_id + " errored");
    finish(rep.overall);
    for (auto& [_, r] : rep.by_hop) finish(r);
    return rep;
}

std::optional<std::pair<ProbeInstance, ProbeInstance>> build_dire_probe(
    const CrumQA& qa, const std::vector<std::string>& context_chunk_ids, std::uint64_t seed) {
    if (context_chunk_ids.size() < 2) {
        spdlog::warn("qa {}: context has fewer than two chunks; no probe", qa.id);
        return std::nullopt;
    }
    std::vector<std::string> ids = context_chunk_ids;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw PreconditionError("qa " + qa.id + ": context repeats a chunk");
    std::mt19937_64 rng(derive_seed(seed, canonical_fields("probe", qa.id)));
    if (ids.size() > 2) seeded_shuffle(ids, rng);
    auto half = static_cast<long>(ids.size() / 2);
    std::vector<std::string> a(ids.begin(), ids.begin() + half), b(ids.begin() + half, ids.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return std::make_pair(ProbeInstance{qa.id, 0, std::move(a)}, ProbeInstance{qa.id, 1, std::move(b)});
}

std::vector<std::string> normalize_answer_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else if (!std::ispunct(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double token_f1(std::string_view predicted, std::string_view gold) {
    auto p = normalize_answer_tokens(predicted);
    auto g = normalize_answer_tokens(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, long> gc;
    for (auto& t : g) ++gc[t];
    long overlap = 0;
    for (auto& t : p) {
        auto it = gc.find(t);
        if (it != gc.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    double prec = static_cast<double>(overlap) / static_cast<double>(p.size());
    double rec = static_cast<double>(overlap) / static_cast<double>(g.size());
    return 2.0 * prec * rec / (prec + rec);
}

double support_f1(const std::set<std::string>& predicted, const std::set<std::string>& gold) {
    if (predicted.empty() && gold.empty()) return 1.0;
    if (predicted.empty() || gold.empty()) return 0.0;
    std::size_t overlap = 0;
    for (const auto& id : predicted) overlap += gold.count(id);
    if (overlap == 0) return 0.0;
    double prec = static_cast<double>(overlap) / static_cast<double>(predicted.size());
    double rec = static_cast<double>(overlap) / static_cast<double>(gold.size());
    return 2.0 * prec * rec / (prec + rec);
}

ProbeCredit parse_probe_credit(std::string_view s) {
    if (s == "max") return ProbeCredit::max;
    if (s == "conjunctive") return ProbeCredit::conjunctive;
    throw ConfigError("unknown probe credit '" + std::string(s) + "'");
}

double probe_credit(double part0, double part1, ProbeCredit mode) {
    return mode == ProbeCredit::max ? std::max(part0, part1) : std::min(part0, part1);
}

CheatabilityReport compute_cheatability(const std::string& model_id, CheatTask task,
                                        const std::vector<double>& full_scores,
                                        const std::vector<double>& probe_scores) {
    if (full_scores.size() != probe_scores.size())
        throw PreconditionError("full and probe score lists are not aligned");
    if (full_scores.empty()) throw PreconditionError("no scores");
    double full = 0.0, probe = 0.0;
    for (double v : full_scores) full += v;
    for (double v : probe_scores) probe += v;
    full /= static_cast<double>(full_scores.size());
    probe /= static_cast<double>(probe_scores.size());
    if (!(full > 0.0)) throw Error("cheatability ratio undefined: mean full-context F1 is 0");
    return {model_id, task, full, probe, probe / full};
}

std::vector<std::string> sample_ids(std::vector<std::string> ids, std::size_t n, std::uint64_t seed) {
    if (n > ids.size())
        throw PreconditionError("cannot sample " + std::to_string(n) + " of " + std::to_string(ids.size()));
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(derive_seed(seed, "sample_queries"));
    // Partial Fisher-Yates: the first n slots become the sample.
    for (std::size_t i = 0; i < n; ++i) {
        auto j = i + static_cast<std::size_t>(uniform_below(rng, ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace crumq::harness
