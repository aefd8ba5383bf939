#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "crumq/core/errors.hpp"
#include "crumq/core/ids.hpp"
#include "crumq/core/random.hpp"
#include "crumq/harness/harness.hpp"

namespace crumq::harness {

std::vector<std::pair<std::string, bool>> holm_bonferroni(
    const std::vector<std::pair<std::string, double>>& p_values, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in (0, 1)");
    for (const auto& [label, p] : p_values)
        if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("p-value of " + label + " outside [0, 1]");
    std::vector<std::size_t> order(p_values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (p_values[a].second != p_values[b].second) return p_values[a].second < p_values[b].second;
        return p_values[a].first < p_values[b].first;
    });
    std::vector<std::pair<std::string, bool>> out;
    for (const auto& [label, _] : p_values) out.emplace_back(label, false);
    const double m = static_cast<double>(p_values.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (p_values[order[k]].second > alpha / (m - static_cast<double>(k))) break;
        out[order[k]].second = true;
    }
    return out;
}

namespace {

struct Centered {
    std::vector<double> diffs;
    double observed = 0.0;
};

Centered center(const std::vector<double>& a, const std::vector<double>& b, int n_resamples) {
    if (a.size() != b.size()) throw PreconditionError("paired samples differ in length");
    if (a.empty()) throw PreconditionError("no paired observations");
    if (n_resamples < kMinResamples)
        throw PreconditionError("n_resamples must be >= " + std::to_string(kMinResamples));
    Centered c;
    c.diffs.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c.diffs[i] = a[i] - b[i];
    c.observed = std::accumulate(c.diffs.begin(), c.diffs.end(), 0.0) / static_cast<double>(a.size());
    for (auto& d : c.diffs) d -= c.observed;
    return c;
}

// Whether resample `r` reaches the observed difference.
bool extreme(const Centered& c, std::uint64_t seed, int r) {
    std::mt19937_64 rng(derive_seed(seed, "bootstrap:" + std::to_string(r)));
    const std::size_t n = c.diffs.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += c.diffs[uniform_below(rng, n)];
    const double mean = sum / static_cast<double>(n);
    return std::abs(mean) >= std::abs(c.observed) - 1e-12;
}

}  // namespace

double paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b, int n_resamples,
                        std::uint64_t seed) {
    auto c = center(a, b, n_resamples);
    long hits = 0;
#pragma omp parallel for schedule(static) reduction(+ : hits)
    for (int r = 0; r < n_resamples; ++r) hits += extreme(c, seed, r) ? 1 : 0;
    return static_cast<double>(hits + 1) / static_cast<double>(n_resamples + 1);
}

double paired_bootstrap_serial(const std::vector<double>& a, const std::vector<double>& b,
                               int n_resamples, std::uint64_t seed) {
    auto c = center(a, b, n_resamples);
    long hits = 0;
    for (int r = 0; r < n_resamples; ++r) hits += extreme(c, seed, r) ? 1 : 0;
    return static_cast<double>(hits + 1) / static_cast<double>(n_resamples + 1);
}

Metric parse_metric(std::string_view s) {
    if (s == "acceptable") return Metric::acceptable;
    if (s == "unanswered") return Metric::unanswered;
    if (s == "clarification") return Metric::clarification;
    if (s == "accuracy") return Metric::accuracy;
    throw ConfigError("unknown metric '" + std::string(s) + "'");
}

double metric_value(const EvalRecord& r, Metric m) {
    switch (m) {
        case Metric::acceptable:
            return r.label == ResponseLabel::attempted_answer ? 0.0 : 1.0;
        case Metric::unanswered:
            return r.label == ResponseLabel::refusal ? 1.0 : 0.0;
        case Metric::clarification:
            return r.label == ResponseLabel::clarification_request ? 1.0 : 0.0;
        case Metric::accuracy:
            return r.accuracy_judged.value_or(false) ? 1.0 : 0.0;
    }
    return 0.0;
}

double paired_significance(const std::vector<EvalRecord>& a, const std::vector<EvalRecord>& b,
                           Metric metric, int n_resamples, std::uint64_t seed) {
    auto index = [](const std::vector<EvalRecord>& rs) {
        std::map<std::string, const EvalRecord*> m;
        for (const auto& r : rs)
            if (!m.emplace(r.query_id, &r).second)
                throw PreconditionError("query " + r.query_id + " appears twice");
        return m;
    };
    auto ia = index(a), ib = index(b);
    if (ia.size() != ib.size()) throw PreconditionError("record sets cover different queries");
    std::vector<double> va, vb;
    for (const auto& [id, ra] : ia) {
        auto it = ib.find(id);
        if (it == ib.end()) throw PreconditionError("query " + id + " is missing from one record set");
        if (ra->error || it->second->error) continue;
        va.push_back(metric_value(*ra, metric));
        vb.push_back(metric_value(*it->second, metric));
    }
    return paired_bootstrap(va, vb, n_resamples, seed);
}

}  // namespace crumq::harness
