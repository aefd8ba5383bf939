#include <fmt/format.h>

#include "crumq/harness/harness.hpp"

namespace crumq::harness {

namespace {

std::string hop_label(int hop) { return hop == 0 ? "unknown" : std::to_string(hop); }

}  // namespace

std::string format_metrics_table(const std::vector<MetricsReport>& reports) {
    std::string out = fmt::format("{:<24} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7}\n", "config", "hops", "n",
                                  "Accep.", "Unans.", "Clar.", "Acc.");
    auto row = [&](const std::string& id, const std::string& hops, const Ratios& r) {
        out += fmt::format("{:<24} {:>8} {:>7} {:>7.3f} {:>7.3f} {:>7.3f} {:>7.3f}\n", id, hops, r.n,
                           r.acceptable, r.unanswered, r.clarification, r.accuracy);
    };
    for (const auto& rep : reports) {
        row(rep.config_id, "all", rep.overall);
        for (const auto& [hop, r] : rep.by_hop) row(rep.config_id, hop_label(hop), r);
        if (rep.errored > 0)
            out += fmt::format("{:<24} errored: {} ({:.3f})\n", rep.config_id, rep.errored, rep.error_rate);
    }
    return out;
}

std::string format_metrics_csv(const std::vector<MetricsReport>& reports) {
    std::string out = "config,hops,n,acceptable,unanswered,clarification,accuracy,errored\n";
    auto row = [&](const MetricsReport& rep, const std::string& hops, const Ratios& r) {
        out += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", rep.config_id, hops, r.n, r.acceptable,
                           r.unanswered, r.clarification, r.accuracy, hops == "all" ? rep.errored : 0);
    };
    for (const auto& rep : reports) {
        row(rep, "all", rep.overall);
        for (const auto& [hop, r] : rep.by_hop) row(rep, hop_label(hop), r);
    }
    return out;
}

std::string format_cheatability_table(const std::vector<CheatabilityReport>& reports) {
    std::string out = fmt::format("{:<24} {:<24} {:>8} {:>8} {:>8}\n", "model", "task", "F1 full", "F1 probe",
                                  "ratio");
    for (const auto& r : reports)
        out += fmt::format("{:<24} {:<24} {:>8.3f} {:>8.3f} {:>8.3f}\n", r.model_id, to_string(r.task),
                           r.f1_full, r.f1_probe, r.ratio);
    return out;
}

std::string format_cheatability_csv(const std::vector<CheatabilityReport>& reports) {
    std::string out = "model,task,f1_full,f1_probe,ratio\n";
    for (const auto& r : reports)
        out += fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", r.model_id, to_string(r.task), r.f1_full,
                           r.f1_probe, r.ratio);
    return out;
}

}  // namespace crumq::harness
