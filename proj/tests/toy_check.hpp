#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "crumq/core/jsonl.hpp"
#include "crumq/core/types.hpp"
#include "crumq/toy/toy.hpp"

namespace crumq::test {

/// Runs the CLI inside `cwd` with output discarded; returns its exit status.
inline int run_cli(const std::string& args, const std::filesystem::path& cwd) {
    std::string cmd = "cd '" + cwd.string() + "' && '" CRUMQ_CLI_PATH "' " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

/// Every regular file under `dir` keyed by relative path, with its bytes.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = read_file(e.path());
    return out;
}

/// Relative paths whose bytes differ between two directories, comma separated.
inline std::string tree_diff(const std::filesystem::path& a, const std::filesystem::path& b) {
    auto x = snapshot(a), y = snapshot(b);
    std::string out;
    auto note = [&](const std::string& k) { out += (out.empty() ? "" : ", ") + k; };
    for (const auto& [k, v] : x)
        if (!y.count(k) || y.at(k) != v) note(k);
    for (const auto& [k, _] : y)
        if (!x.count(k)) note(k);
    return out;
}

/// Status the toy script is built to give a pair, worked out from the
/// markers in its context chunks rather than from the pipeline's output.
inline QaStatus scripted_status(const CrumQA& qa, const std::map<std::string, ContextGroup>& contexts,
                                const std::map<std::string, std::string>& chunk_text) {
    const auto& ctx = contexts.at(qa.context_id);
    const std::vector<std::pair<const char*, RejectReason>> gates{
        {toy::kVerifyFailMarker, RejectReason::verify_fail},
        {toy::kHopFailMarker, RejectReason::hop_mismatch},
        {toy::kQualityFailMarker, RejectReason::quality_fail}};
    for (const auto& [marker, reason] : gates)
        for (const auto& id : ctx.chunk_ids)
            if (chunk_text.at(id).find(marker) != std::string::npos) return QaStatus::rejected(reason);
    return {QaStage::accepted, std::nullopt};
}

struct GateReport {
    std::size_t pairs = 0, accepted = 0, mismatches = 0;
    std::map<std::string, std::size_t> rejected;
    bool accepted_file_matches = false;
};

/// Compares every pair in `out` against the scripted outcome.
inline GateReport check_toy_gates(const std::filesystem::path& out) {
    std::map<std::string, ContextGroup> contexts;
    for (auto& c : load_records<ContextGroup>(out / "contexts.jsonl")) contexts[c.id] = c;
    std::map<std::string, std::string> text;
    for (const char* f : {"chunks.jsonl", "corpus_chunks.jsonl"})
        for (auto& c : load_records<Chunk>(out / f)) text[c.id] = c.text;

    GateReport r;
    std::set<std::string> expect_accepted;
    for (const auto& qa : load_records<CrumQA>(out / "qa_all.jsonl")) {
        ++r.pairs;
        auto want = scripted_status(qa, contexts, text);
        if (!(qa.status == want)) ++r.mismatches;
        if (want.stage == QaStage::accepted)
            expect_accepted.insert(qa.id);
        else
            ++r.rejected[std::string(to_string(*want.reason))];
    }
    r.accepted = expect_accepted.size();
    std::set<std::string> got;
    for (const auto& qa : load_records<CrumQA>(out / "qa_accepted.jsonl")) got.insert(qa.id);
    r.accepted_file_matches = got == expect_accepted;
    return r;
}

}  // namespace crumq::test
