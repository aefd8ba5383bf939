#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"
#include "crumq/pipeline/config.hpp"
#include "crumq/providers/chat.hpp"
#include "crumq/providers/embed.hpp"
#include "crumq/providers/judge.hpp"
#include "crumq/providers/mock.hpp"
#include "crumq/retrieval/retrieval.hpp"

namespace crumq {

/// The gold corpus: documents and the requests annotated against them.
struct Corpus {
    std::vector<DocumentRef> documents;
    std::vector<Request> requests;
};

/// Reads `documents.jsonl` ({key, title, body, published_at?}) and
/// `requests.jsonl` ({id, text, gold_doc_keys}) from `dir`. Gold keys map to
/// document ids; an unknown key or a request without gold documents is a
/// FormatError naming file and line.
Corpus load_corpus(const std::filesystem::path& dir);

enum class Stage { topics, crawl, chunk, generate, verify, filter, evaluate, probe, cheatability, report };

const std::vector<Stage>& all_stages();
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);
/// Exit status reported when stage `s` fails: 3 + its position in the order.
int exit_code_for(Stage s);

class StageError : public Error {
  public:
    StageError(Stage stage, const std::string& what)
        : Error(std::string(to_string(stage)) + ": " + what), stage_(stage) {}
    Stage stage() const { return stage_; }

  private:
    Stage stage_;
};

/// Where each stage reads and writes. Defaults live under the output
/// directory; subcommands may point individual files elsewhere.
struct Artifacts {
    std::filesystem::path root;
    std::filesystem::path topics, articles, crawl_warnings, chunks, corpus_chunks, corpus_index,
        contexts, qa_seed, verifications, qa_verified, qa_all, qa_accepted, review_sample,
        eval_records, probes, cheatability, reports, quarantine, stages, manifest;

    static Artifacts under(const std::filesystem::path& root);
};

/// Checkpointed generation, vetting and evaluation run. Each stage is skipped when its
/// outputs exist and the digest of its inputs and relevant configuration
/// matches the one recorded when it last ran.
class Pipeline {
  public:
    explicit Pipeline(Config config, std::optional<Artifacts> artifacts = std::nullopt);
    ~Pipeline();

    /// Runs (or skips) one stage. Failures surface as StageError.
    void run_stage(Stage s, bool force = false);
    void run_all();
    /// Writes manifest.json from the stages seen so far.
    void write_manifest();

    const Config& config() const { return cfg_; }
    const Artifacts& artifacts() const { return art_; }
    /// Backend calls (chat and embedding) issued by this process.
    long provider_calls() const;
    nlohmann::json stage_summary(Stage s) const;

    ChatClient& chat(const std::string& model);
    EmbeddingClient& embedder(const std::string& name);
    /// The scripted backend behind a mock model (created on first use).
    std::shared_ptr<MockChatBackend> mock_backend(const std::string& model);
    /// Rerankers available to RAG configurations by id.
    retrieval::RerankerRegistry& rerankers();

  private:
    struct Impl;
    std::string stage_digest(Stage s);
    nlohmann::json execute(Stage s);
    std::vector<std::filesystem::path> outputs_of(Stage s) const;

    Config cfg_;
    Artifacts art_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace crumq
