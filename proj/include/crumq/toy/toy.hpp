#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace crumq::toy {

inline constexpr int kShortCalibrationTokens = 1024;
inline constexpr int kLongCalibrationTokens = 3000;
inline constexpr const char* kShortCalibrationKey = "calibration-1024";
inline constexpr const char* kLongCalibrationKey = "calibration-3000";

/// Markers planted in external articles. A question generated from a context
/// holding one of them is scripted to fail the matching gate; the first
/// marker in this order wins.
inline constexpr const char* kVerifyFailMarker = "VERIFYFAIL";
inline constexpr const char* kHopFailMarker = "HOPFAIL";
inline constexpr const char* kQualityFailMarker = "QUALFAIL";
/// Chunks carrying this marker are judged irrelevant.
inline constexpr const char* kOffTopicMarker = "OFFTOPIC";

/// Rule-based mock table driving every prompt of a toy run.
nlohmann::json mock_rules();

/// Writes a miniature corpus to `dir`:
///   corpus/documents.jsonl, corpus/requests.jsonl
///   feeds/<source>/<digest>.json   recorded feed responses
///   mock_rules.json                the rule table
///   mock_chat.json                 exact (prompt_id, input digest) fixtures
///   pipeline.toml                  configuration using the above
/// The exact fixtures are recorded by running the pipeline once with the
/// rule table. Output depends only on `seed`.
void generate_toy_corpus(const std::filesystem::path& dir, std::uint64_t seed);

/// Configuration text written to pipeline.toml.
std::string toy_config_text(std::uint64_t seed);

}  // namespace crumq::toy
