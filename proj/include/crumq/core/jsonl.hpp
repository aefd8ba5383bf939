#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crumq/core/errors.hpp"
#include "crumq/core/types.hpp"

namespace crumq {

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Writes one JSON object per line, sorted by record_key. Returns the count
/// written. The output is byte-stable for a given record set.
template <typename T>
std::size_t persist_records(const std::filesystem::path& path, std::vector<T> records) {
    std::stable_sort(records.begin(), records.end(), [](const T& a, const T& b) {
        return record_key(a) < record_key(b);
    });
    std::string out;
    for (const auto& r : records) {
        try {
            nlohmann::json j = r;
            out += j.dump();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("cannot serialize record " + std::string(record_key(r)) + ": " +
                              e.what());
        }
        out.push_back('\n');
    }
    write_file_atomic(path, out);
    return records.size();
}

/// Inverse of persist_records; errors name the offending line.
template <typename T>
std::vector<T> load_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<T>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace crumq
